#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "difftsp/denoiser.hpp"
#include "difftsp/graph.hpp"
#include "difftsp/rng.hpp"
#include "difftsp/schedule.hpp"

namespace difftsp {

struct SamplerConfig {
    std::size_t steps = 20;
    double gamma = 0.999;
    // Thresholded resolution (indicator p > gamma) is the default; the
    // Bernoulli(u(t) * p) posterior variant is exposed for study.
    bool bernoulli = false;
    std::vector<std::size_t> snapshot_steps;  // completed-denoise-step indices
};

struct Trajectory {
    // (completed steps, query edge state) pairs in sampling order.
    std::vector<std::pair<std::size_t, AdjacencyState>> snapshots;
};

struct SampleResult {
    std::vector<Triple> predicted;
    Trajectory trajectory;
    // Cells still awaiting a resolution draw after the final step; u(1) = 1
    // makes this zero by construction.
    std::size_t unresolved_after_final = 0;
};

// Iterative generation of query edges conditioned on a support graph. Starts
// from the support entities with no query edges, unmasks cells with
// probability u(t) per step, keeps committed edges, and never emits a support
// edge.
SampleResult sample(const AdjacencyState& support, const DenoiserParams& params,
                    const NoiseSchedule& schedule, const SamplerConfig& cfg, const CounterRng& rng,
                    std::uint64_t run_id);

// Repaint-style variant for checkpoints trained on whole-graph reconstruction:
// known cells are re-noised from the clean graph each step, unknown cells come
// from the reverse model, and the two are merged by the known-edge mask.
SampleResult sample_repaint(const AdjacencyState& known, const DenoiserParams& params,
                            const NoiseSchedule& schedule, const SamplerConfig& cfg,
                            const CounterRng& rng, std::uint64_t run_id);

// One edge-list file per snapshot; edges are flagged correct/incorrect against
// the ground truth when given, "unknown" otherwise. Returns the file paths.
std::vector<std::string> export_snapshots(const Trajectory& trajectory, const Vocab& vocab,
                                          const std::vector<Triple>* ground_truth,
                                          const std::string& dir);

}  // namespace difftsp
