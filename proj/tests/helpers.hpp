#pragma once

#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "difftsp/dataset.hpp"
#include "difftsp/graph.hpp"

namespace testutil {

using difftsp::EntityId;
using difftsp::Graph;
using difftsp::RelationId;
using difftsp::Triple;
using difftsp::Vocab;

// Vocab with entities e0..e{n-1} and relations r0..r{m-1}, ids in order.
inline Vocab make_vocab(std::size_t n_ent, std::size_t n_rel) {
    Vocab v;
    for (std::size_t i = 0; i < n_ent; ++i) v.add_entity("e" + std::to_string(i));
    for (std::size_t r = 0; r < n_rel; ++r) v.add_relation("r" + std::to_string(r));
    return v;
}

// Deduplicated random triples, no fixed density guarantees.
inline std::vector<Triple> random_triples(std::size_t n_ent, std::size_t n_rel, std::size_t count,
                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(n_ent - 1));
    std::uniform_int_distribution<RelationId> rel(0, static_cast<RelationId>(n_rel - 1));
    std::set<std::tuple<EntityId, RelationId, EntityId>> seen;
    std::vector<Triple> out;
    while (out.size() < count) {
        Triple t{ent(rng), rel(rng), ent(rng)};
        if (seen.insert({t.head, t.relation, t.tail}).second) out.push_back(t);
    }
    return out;
}

}  // namespace testutil
