#pragma once

#include <string>
#include <vector>

#include "difftsp/graph.hpp"

namespace difftsp {

// Set-level scores under one world assumption. t_wa is the subset of the
// prediction that the assumption can judge at all; t_wa_plus the judged-true
// part.
struct MetricsReport {
    std::size_t t_pred = 0;
    std::size_t t_wa = 0;
    std::size_t t_wa_plus = 0;
    std::size_t t_test = 0;
    double jprecision = 0.0;
    double strecall = 0.0;
    double f_tsp = 0.0;
    std::string assumption;  // "CWA" or "RS-POWA"

    std::string to_kv() const;
    std::string to_json() const;
};

// Symmetric relation-similarity matrix with a judgment threshold.
struct SimMatrix {
    std::size_t n_rel = 0;
    std::vector<double> values;  // n_rel * n_rel
    double theta = 0.5;

    double at(RelationId r, RelationId s) const { return values[r * n_rel + s]; }
};

// Score arithmetic shared by both assumptions:
// JPrecision = (|wa+|/|wa| + |wa+|/|pred|) / 2, STRecall = sqrt(|wa+|/|test|),
// F_TSP their harmonic mean. Empty predictions score 0 across the board.
MetricsReport metrics_from_counts(std::size_t n_pred, std::size_t n_wa, std::size_t n_wa_plus,
                                  std::size_t n_test, const std::string& assumption);

MetricsReport cwa_metrics(const std::vector<Triple>& pred, const std::vector<Triple>& test);

// A prediction outside the test set counts as confidently false only when a
// known triple with a dissimilar relation links the same ordered pair.
MetricsReport rs_powa_metrics(const std::vector<Triple>& pred, const std::vector<Triple>& test,
                              const std::vector<Triple>& train, const SimMatrix& sim);

// Cosine similarity of per-relation head/tail entity frequency profiles.
SimMatrix default_similarity(const Graph& train, double theta = 0.5);

SimMatrix load_similarity(const std::string& path, const Vocab& vocab, double theta = 0.5);

}  // namespace difftsp
