#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "difftsp/checkpoint.hpp"
#include "difftsp/dataset.hpp"
#include "difftsp/denoiser.hpp"
#include "difftsp/loss.hpp"
#include "difftsp/optimizer.hpp"
#include "difftsp/sampling.hpp"
#include "difftsp/schedule.hpp"

namespace difftsp {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;  // epochs without validation improvement
    std::uint64_t seed = 0;
    std::size_t subgraph_cap = 256;
    double rho = 0.8;
    std::size_t n_s = 100;
    std::size_t t_total = 20;
    double gamma = 0.999;
    std::size_t embed_dim = 16;
    std::size_t n_dit = 3;
    std::size_t l_rce = 2;
    bool whole_graph_mode = false;  // reconstruction training for repaint
    LossConfig loss;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double val_f_tsp = 0.0;
};

// One optimizer step on one task: sample t uniformly, noise the query, fuse
// with the support, denoise, weighted-BCE loss, backprop, Adam update.
double train_step(const Task& task, DenoiserParams& params, Adam& adam,
                  const NoiseSchedule& schedule, const LossConfig& loss_cfg,
                  std::uint64_t step_seed);

using EpochCallback = std::function<void(const EpochLog&)>;

// Full training loop with early stopping on validation F_TSP under CWA.
// Returns the best checkpoint, with parameters quantized to the checkpoint's
// float32 storage precision and its recorded score recomputed at that
// precision.
Checkpoint train(const DatasetBundle& bundle, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

// Receives each subgraph's sampling trajectory when snapshot steps are set.
using SnapshotSink = std::function<void(std::size_t subgraph_id, const Trajectory&)>;

// Prediction over the whole KG: per-subgraph sampling with the subgraph's
// train triples as support, union over subgraphs, train edges removed,
// deduplicated.
std::vector<Triple> predict(const Graph& train, const Checkpoint& ckpt, std::size_t subgraph_cap,
                            std::uint64_t seed, bool repaint = false,
                            const std::vector<std::size_t>& snapshot_steps = {},
                            const SnapshotSink& sink = {});

}  // namespace difftsp
