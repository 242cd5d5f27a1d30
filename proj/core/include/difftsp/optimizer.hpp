#pragma once

#include <cstdint>
#include <vector>

#include "difftsp/denoiser.hpp"

namespace difftsp {

// Flat views of every parameter array, in visitation order. Params, grads and
// moments share the same layout, so paired iteration is positional.
std::vector<std::vector<double>*> param_arrays(DenoiserParams& p);

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step_count = 0;
    DenoiserParams m;
    DenoiserParams v;

    explicit Adam(const ModelConfig& cfg, double learning_rate = 1e-3)
        : lr(learning_rate), m(DenoiserParams::zeros(cfg)), v(DenoiserParams::zeros(cfg)) {}

    void update(DenoiserParams& params, DenoiserParams& grads);
};

}  // namespace difftsp
