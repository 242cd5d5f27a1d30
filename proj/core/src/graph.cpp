#include "difftsp/graph.hpp"

#include <unordered_set>

#include "difftsp/rng.hpp"

namespace difftsp {

EntityId Vocab::add_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    EntityId id = static_cast<EntityId>(entities_.size());
    entities_.push_back(name);
    entity_ids_.emplace(name, id);
    return id;
}

RelationId Vocab::add_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    RelationId id = static_cast<RelationId>(relations_.size());
    relations_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

EntityId Vocab::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    if (it == entity_ids_.end()) throw InvalidId("unknown entity: " + name);
    return it->second;
}

RelationId Vocab::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) throw InvalidId("unknown relation: " + name);
    return it->second;
}

std::uint64_t Vocab::fingerprint() const {
    // FNV-1a over both name lists with separators.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= 0x1f;
        h *= 0x100000001b3ULL;
    };
    for (const auto& e : entities_) feed(e);
    h ^= 0x2f;
    h *= 0x100000001b3ULL;
    for (const auto& r : relations_) feed(r);
    return h;
}

Graph::Graph(const Vocab* vocab, const std::vector<Triple>& triples) : vocab_(vocab) {
    by_relation_.resize(vocab->num_relations());
    outgoing_.resize(vocab->num_entities());
    incoming_.resize(vocab->num_entities());
    triples_.reserve(triples.size());
    for (const Triple& t : triples) {
        if (t.head >= vocab->num_entities() || t.tail >= vocab->num_entities())
            throw InvalidId("entity id out of range");
        if (t.relation >= vocab->num_relations())
            throw InvalidId("relation id out of range");
        if (!triple_set_.emplace(t, 1).second) continue;  // duplicate
        triples_.push_back(t);
        by_relation_[t.relation].push_back(t);
        outgoing_[t.head].push_back(t);
        incoming_[t.tail].push_back(t);
    }
}

void AdjacencyState::refresh_no_edge() {
    const std::size_t b = channels();
    for (std::size_t i = 0; i < n(); ++i) {
        for (std::size_t j = 0; j < n(); ++j) {
            bool any = false;
            for (std::size_t k = 0; k < n_rel; ++k) {
                if (cells[(i * n() + j) * b + k]) { any = true; break; }
            }
            cells[(i * n() + j) * b + (b - 1)] = any ? 0 : 1;
        }
    }
}

std::vector<Triple> AdjacencyState::extract_triples() const {
    std::vector<Triple> out;
    for (std::size_t i = 0; i < n(); ++i)
        for (std::size_t j = 0; j < n(); ++j)
            for (std::size_t k = 0; k < n_rel; ++k)
                if (at(i, j, k))
                    out.push_back({entity_list[i], static_cast<RelationId>(k), entity_list[j]});
    return out;
}

std::size_t FreqTable::total_triples() const {
    std::size_t s = 0;
    for (std::size_t c : relation_counts) s += c;
    return s;
}

Vocab build_vocab(const std::vector<std::tuple<std::string, std::string, std::string>>& raw_triples) {
    if (raw_triples.empty()) throw EmptyDataset("no triples to build a vocabulary from");
    Vocab v;
    for (const auto& [h, r, t] : raw_triples) {
        v.add_entity(h);
        v.add_relation(r);
        v.add_entity(t);
    }
    return v;
}

Graph graph_from_triples(const Vocab& vocab, const std::vector<Triple>& triples) {
    return Graph(&vocab, triples);
}

AdjacencyState to_adjacency(const Graph& graph, const std::vector<EntityId>& entity_list) {
    std::unordered_map<EntityId, std::size_t> pos;
    pos.reserve(entity_list.size());
    for (std::size_t i = 0; i < entity_list.size(); ++i) {
        if (!pos.emplace(entity_list[i], i).second)
            throw InvalidSubset("duplicate entity in entity_list");
    }
    AdjacencyState adj;
    adj.entity_list = entity_list;
    adj.n_rel = graph.vocab().num_relations();
    adj.cells.assign(entity_list.size() * entity_list.size() * adj.channels(), 0);
    for (const Triple& t : graph.triples()) {
        auto hi = pos.find(t.head);
        auto ti = pos.find(t.tail);
        if (hi == pos.end() || ti == pos.end()) continue;  // outside the subset
        adj.set(hi->second, ti->second, t.relation, 1);
    }
    adj.refresh_no_edge();
    return adj;
}

FreqTable relation_frequencies(const Graph& graph) {
    FreqTable f;
    f.relation_counts.assign(graph.vocab().num_relations(), 0);
    for (const Triple& t : graph.triples()) ++f.relation_counts[t.relation];
    return f;
}

}  // namespace difftsp
