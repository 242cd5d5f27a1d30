#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "difftsp/errors.hpp"

namespace difftsp {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Bidirectional name <-> dense id maps for entities and relations.
// Ids are 0-based in first-occurrence order and stable for the life of a run.
class Vocab {
public:
    EntityId add_entity(const std::string& name);
    RelationId add_relation(const std::string& name);

    EntityId entity_id(const std::string& name) const;
    RelationId relation_id(const std::string& name) const;
    bool has_entity(const std::string& name) const { return entity_ids_.count(name) != 0; }
    bool has_relation(const std::string& name) const { return relation_ids_.count(name) != 0; }

    const std::string& entity_name(EntityId id) const { return entities_.at(id); }
    const std::string& relation_name(RelationId id) const { return relations_.at(id); }

    std::size_t num_entities() const { return entities_.size(); }
    std::size_t num_relations() const { return relations_.size(); }

    const std::vector<std::string>& entities() const { return entities_; }
    const std::vector<std::string>& relations() const { return relations_; }

    // Content hash over entity and relation name lists, used to pair
    // checkpoints with the dataset they were trained on.
    std::uint64_t fingerprint() const;

private:
    std::vector<std::string> entities_;
    std::vector<std::string> relations_;
    std::unordered_map<std::string, EntityId> entity_ids_;
    std::unordered_map<std::string, RelationId> relation_ids_;
};

struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
    std::size_t operator()(const Triple& t) const {
        std::uint64_t h = (std::uint64_t(t.head) << 40) ^ (std::uint64_t(t.relation) << 20) ^ t.tail;
        h *= 0x9e3779b97f4a7c15ULL;
        return static_cast<std::size_t>(h ^ (h >> 32));
    }
};

// Deduplicated sparse triple store with per-relation and per-entity indices.
// Immutable after construction; safe for concurrent reads.
class Graph {
public:
    Graph() = default;
    Graph(const Vocab* vocab, const std::vector<Triple>& triples);

    const Vocab& vocab() const { return *vocab_; }
    const std::vector<Triple>& triples() const { return triples_; }
    std::size_t size() const { return triples_.size(); }
    bool contains(const Triple& t) const { return triple_set_.count(t) != 0; }

    const std::vector<Triple>& by_relation(RelationId r) const { return by_relation_.at(r); }
    const std::vector<Triple>& outgoing(EntityId e) const { return outgoing_.at(e); }
    const std::vector<Triple>& incoming(EntityId e) const { return incoming_.at(e); }

private:
    const Vocab* vocab_ = nullptr;
    std::vector<Triple> triples_;
    std::unordered_map<Triple, char, TripleHash> triple_set_;
    std::vector<std::vector<Triple>> by_relation_;
    std::vector<std::vector<Triple>> outgoing_;
    std::vector<std::vector<Triple>> incoming_;
};

// Dense n x n x b edge-state view for one subgraph, b = n_rel + 1 with the
// no-edge class as the last channel. Real channels hold present/absent; the
// no-edge channel is derived (present iff every real channel of the pair is
// absent) and is never noised.
struct AdjacencyState {
    std::vector<EntityId> entity_list;
    std::size_t n_rel = 0;
    std::vector<std::uint8_t> cells;  // n*n*b occupancy, row-major (i, j, k)

    std::size_t n() const { return entity_list.size(); }
    std::size_t channels() const { return n_rel + 1; }

    std::size_t idx(std::size_t i, std::size_t j, std::size_t k) const {
        return (i * n() + j) * channels() + k;
    }
    std::uint8_t at(std::size_t i, std::size_t j, std::size_t k) const { return cells[idx(i, j, k)]; }
    void set(std::size_t i, std::size_t j, std::size_t k, std::uint8_t v) { cells[idx(i, j, k)] = v; }

    // Recomputes the derived no-edge channel from the real channels.
    void refresh_no_edge();

    // Present real-channel cells as triples in the owning vocab's id space.
    std::vector<Triple> extract_triples() const;
};

struct FreqTable {
    std::vector<std::size_t> relation_counts;  // indexed by relation id
    std::size_t absent_pairs = 0;

    std::size_t total_triples() const;
};

Vocab build_vocab(const std::vector<std::tuple<std::string, std::string, std::string>>& raw_triples);

Graph graph_from_triples(const Vocab& vocab, const std::vector<Triple>& triples);

AdjacencyState to_adjacency(const Graph& graph, const std::vector<EntityId>& entity_list);

FreqTable relation_frequencies(const Graph& graph);

}  // namespace difftsp
