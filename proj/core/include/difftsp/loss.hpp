#pragma once

#include <vector>

#include "difftsp/denoiser.hpp"
#include "difftsp/graph.hpp"

namespace difftsp {

struct LossConfig {
    bool weighted = true;       // inverse-frequency channel weights
    bool exclude_known = true;  // drop cells already present in G^s or G_t^q
    double clip_lo = 0.1;
    double clip_hi = 100.0;
};

// Inverse-frequency class weights, one per channel (no-edge channel last).
// Weights are normalized to mean 1 over the channels that actually occur,
// then clipped; channels with zero count get the clip ceiling.
std::vector<double> loss_weights(const FreqTable& freq, std::size_t n_pairs_absent,
                                 double clip_lo = 0.1, double clip_hi = 100.0);

struct LossResult {
    double loss = 0.0;
    std::vector<double> dlogits;   // n*n*b, zero on excluded cells
    std::size_t included_cells = 0;
};

// Weighted BCE against the clean query tensor, averaged over included cells.
// Real-relation cells present in the support or in the noisy query are
// excluded; the no-edge channel is always scored.
LossResult masked_weighted_bce(const DenoiserOutput& output, const AdjacencyState& target,
                               const AdjacencyState& support, const AdjacencyState& noisy,
                               const std::vector<double>& weights, bool exclude_known = true);

}  // namespace difftsp
