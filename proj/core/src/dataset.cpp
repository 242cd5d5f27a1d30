#include "difftsp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <unordered_set>

#include "difftsp/rng.hpp"

namespace difftsp {

std::vector<RawTriple> load_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<RawTriple> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t tab1 = line.find('\t');
        std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos ||
            line.find('\t', tab2 + 1) != std::string::npos) {
            throw ParseError("expected exactly 3 TAB-separated fields", lineno);
        }
        rows.emplace_back(line.substr(0, tab1), line.substr(tab1 + 1, tab2 - tab1 - 1),
                          line.substr(tab2 + 1));
    }
    return rows;
}

namespace {

std::vector<Triple> to_ids(const Vocab& vocab, const std::vector<RawTriple>& raw) {
    std::vector<Triple> out;
    out.reserve(raw.size());
    for (const auto& [h, r, t] : raw)
        out.push_back({vocab.entity_id(h), vocab.relation_id(r), vocab.entity_id(t)});
    return out;
}

}  // namespace

DatasetBundle load_bundle(const std::string& train_path, const std::string& valid_path,
                          const std::string& test_path) {
    auto train_raw = load_tsv(train_path);
    auto valid_raw = load_tsv(valid_path);
    auto test_raw = load_tsv(test_path);
    auto all = train_raw;
    all.insert(all.end(), valid_raw.begin(), valid_raw.end());
    all.insert(all.end(), test_raw.begin(), test_raw.end());
    DatasetBundle b;
    b.vocab = std::make_shared<Vocab>(build_vocab(all));
    b.train = graph_from_triples(*b.vocab, to_ids(*b.vocab, train_raw));
    b.valid = graph_from_triples(*b.vocab, to_ids(*b.vocab, valid_raw));
    b.test = graph_from_triples(*b.vocab, to_ids(*b.vocab, test_raw));
    return b;
}

std::vector<Subgraph> partition_graph(const Graph& graph, std::size_t cap, std::uint64_t seed) {
    const std::size_t n = graph.vocab().num_entities();
    // Undirected skeleton, neighbor lists deduplicated and sorted.
    std::vector<std::vector<EntityId>> nbrs(n);
    for (const Triple& t : graph.triples()) {
        nbrs[t.head].push_back(t.tail);
        nbrs[t.tail].push_back(t.head);
    }
    for (auto& v : nbrs) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    std::vector<std::size_t> coverage(n, 0);
    std::vector<Subgraph> parts;
    for (;;) {
        // Least-covered entity seeds the next subgraph; stop once all covered.
        EntityId best = 0;
        bool found = false;
        for (EntityId e = 0; e < n; ++e) {
            if (coverage[e] == 0 && (!found || coverage[e] < coverage[best])) {
                best = e;
                found = true;
            }
        }
        if (!found) break;

        std::mt19937_64 rng(derive_seed(seed, parts.size()));
        std::vector<char> visited(n, 0);
        std::vector<EntityId> members;
        std::deque<EntityId> frontier{best};
        visited[best] = 1;
        while (!frontier.empty() && members.size() < cap) {
            EntityId cur = frontier.front();
            frontier.pop_front();
            members.push_back(cur);
            auto order = nbrs[cur];
            std::shuffle(order.begin(), order.end(), rng);
            for (EntityId nb : order) {
                if (!visited[nb]) {
                    visited[nb] = 1;
                    frontier.push_back(nb);
                }
            }
        }
        for (EntityId e : members) ++coverage[e];

        Subgraph sg;
        sg.entity_list = members;
        std::unordered_set<EntityId> inside(members.begin(), members.end());
        for (const Triple& t : graph.triples())
            if (inside.count(t.head) && inside.count(t.tail)) sg.triples.push_back(t);
        parts.push_back(std::move(sg));
    }
    return parts;
}

double partition_coverage(const Graph& graph, const std::vector<Subgraph>& parts) {
    if (graph.size() == 0) return 1.0;
    std::unordered_set<Triple, TripleHash> covered;
    for (const Subgraph& sg : parts) covered.insert(sg.triples.begin(), sg.triples.end());
    return static_cast<double>(covered.size()) / static_cast<double>(graph.size());
}

Task relation_balanced_split(const Subgraph& subgraph, std::size_t subgraph_id, double rho,
                             std::uint64_t task_seed) {
    if (!(rho > 0.0 && rho < 1.0)) throw InvalidRho("rho must be in (0,1)");
    Task task;
    task.entity_list = subgraph.entity_list;
    task.subgraph_id = subgraph_id;
    task.seed = task_seed;

    // Group by relation, keeping relation order stable.
    std::vector<std::vector<Triple>> strata;
    for (const Triple& t : subgraph.triples) {
        if (t.relation >= strata.size()) strata.resize(t.relation + 1);
        strata[t.relation].push_back(t);
    }
    for (RelationId r = 0; r < strata.size(); ++r) {
        auto& bucket = strata[r];
        if (bucket.empty()) continue;
        if (bucket.size() == 1) {
            // A query-only relation would give the denoiser no supervised
            // context for that type; singletons always go to support.
            task.support.push_back(bucket.front());
            continue;
        }
        std::mt19937_64 rng(derive_seed(task_seed, r));
        std::shuffle(bucket.begin(), bucket.end(), rng);
        // Half-up rounding of rho * n_r.
        std::size_t k = static_cast<std::size_t>(std::floor(rho * bucket.size() + 0.5));
        k = std::min(k, bucket.size());
        task.support.insert(task.support.end(), bucket.begin(), bucket.begin() + k);
        task.query.insert(task.query.end(), bucket.begin() + k, bucket.end());
    }
    return task;
}

std::vector<Task> generate_tasks(const Subgraph& subgraph, std::size_t subgraph_id, double rho,
                                 std::size_t n_s, std::uint64_t seed) {
    std::vector<Task> tasks;
    tasks.reserve(n_s);
    for (std::size_t i = 0; i < n_s; ++i)
        tasks.push_back(relation_balanced_split(subgraph, subgraph_id,
                                                rho, derive_seed(seed, subgraph_id, i)));
    return tasks;
}

}  // namespace difftsp
