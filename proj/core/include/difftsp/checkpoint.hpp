#pragma once

#include <cstdint>
#include <string>

#include "difftsp/denoiser.hpp"
#include "difftsp/optimizer.hpp"

namespace difftsp {

// On-disk model state. Parameter payloads are 32-bit little-endian floats;
// training quantizes to that precision before recording validation scores so
// a reloaded checkpoint reproduces them exactly.
struct Checkpoint {
    std::uint32_t version = 1;
    bool whole_graph_mode = false;  // trained without support conditioning
    std::size_t t_total = 20;
    double gamma = 0.999;
    double rho = 0.8;
    std::size_t n_s = 100;
    std::uint64_t vocab_fingerprint = 0;
    double best_val_f_tsp = 0.0;
    DenoiserParams params;
    double lr = 1e-3;
    std::uint64_t adam_step = 0;
    DenoiserParams adam_m;
    DenoiserParams adam_v;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

// Throws DatasetMismatch when the checkpoint was trained on a different vocab.
void verify_checkpoint(const Checkpoint& ckpt, const Vocab& vocab);

// Rounds every parameter through float32, the checkpoint storage precision.
void quantize_params(DenoiserParams& params);

}  // namespace difftsp
