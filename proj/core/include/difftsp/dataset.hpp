#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "difftsp/graph.hpp"

namespace difftsp {

using RawTriple = std::tuple<std::string, std::string, std::string>;

// Train/valid/test splits over one shared vocabulary built from their union.
struct DatasetBundle {
    std::shared_ptr<Vocab> vocab;
    Graph train;
    Graph valid;
    Graph test;
};

// Entity subset of a parent graph together with its induced triples.
struct Subgraph {
    std::vector<EntityId> entity_list;
    std::vector<Triple> triples;
};

// One support/query split of a subgraph's triples. The two sets are disjoint
// and exhaustive; entities are shared.
struct Task {
    std::vector<EntityId> entity_list;
    std::vector<Triple> support;
    std::vector<Triple> query;
    std::size_t subgraph_id = 0;
    std::uint64_t seed = 0;
};

std::vector<RawTriple> load_tsv(const std::string& path);

DatasetBundle load_bundle(const std::string& train_path, const std::string& valid_path,
                          const std::string& test_path);

// Overlapping BFS-grown subgraphs: least-covered entity seeds a breadth-first
// expansion over the undirected skeleton until the entity cap is reached.
// Every entity ends up in at least one subgraph.
std::vector<Subgraph> partition_graph(const Graph& graph, std::size_t cap, std::uint64_t seed);

// Fraction of graph triples whose endpoints are co-resident in at least one
// subgraph. Triples never co-resident are unpredictable by construction.
double partition_coverage(const Graph& graph, const std::vector<Subgraph>& parts);

// Per-relation stratified split: round(rho * n_r) triples to support, the rest
// to query. Singleton strata go to support.
Task relation_balanced_split(const Subgraph& subgraph, std::size_t subgraph_id, double rho,
                             std::uint64_t task_seed);

std::vector<Task> generate_tasks(const Subgraph& subgraph, std::size_t subgraph_id, double rho,
                                 std::size_t n_s, std::uint64_t seed);

}  // namespace difftsp
