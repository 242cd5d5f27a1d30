#include "difftsp/optimizer.hpp"

#include <cmath>

namespace difftsp {

std::vector<std::vector<double>*> param_arrays(DenoiserParams& p) {
    std::vector<std::vector<double>*> out;
    p.for_each([&](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
        out.push_back(&v);
    });
    return out;
}

void Adam::update(DenoiserParams& params, DenoiserParams& grads) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    auto pa = param_arrays(params);
    auto ga = param_arrays(grads);
    auto ma = param_arrays(m);
    auto va = param_arrays(v);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        auto& pv = *pa[i];
        auto& gv = *ga[i];
        auto& mv = *ma[i];
        auto& vv = *va[i];
        for (std::size_t j = 0; j < pv.size(); ++j) {
            mv[j] = beta1 * mv[j] + (1.0 - beta1) * gv[j];
            vv[j] = beta2 * vv[j] + (1.0 - beta2) * gv[j] * gv[j];
            const double mhat = mv[j] / bc1;
            const double vhat = vv[j] / bc2;
            pv[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace difftsp
