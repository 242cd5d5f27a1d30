#include "difftsp/loss.hpp"

#include <algorithm>
#include <cmath>

#include "difftsp/errors.hpp"

namespace difftsp {

std::vector<double> loss_weights(const FreqTable& freq, std::size_t n_pairs_absent,
                                 double clip_lo, double clip_hi) {
    const std::size_t b = freq.relation_counts.size() + 1;
    std::vector<std::size_t> counts(freq.relation_counts);
    counts.push_back(n_pairs_absent);
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (freq.total_triples() == 0) throw DegenerateDataset("no relation has a nonzero count");

    std::vector<double> w(b, 0.0);
    double mean = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t k = 0; k < b; ++k) {
        if (counts[k] == 0) continue;
        w[k] = static_cast<double>(total) / static_cast<double>(counts[k]);
        mean += w[k];
        ++nonzero;
    }
    mean /= static_cast<double>(nonzero);
    for (std::size_t k = 0; k < b; ++k) {
        if (counts[k] == 0) {
            w[k] = clip_hi;
        } else {
            w[k] = std::clamp(w[k] / mean, clip_lo, clip_hi);
        }
    }
    return w;
}

LossResult masked_weighted_bce(const DenoiserOutput& output, const AdjacencyState& target,
                               const AdjacencyState& support, const AdjacencyState& noisy,
                               const std::vector<double>& weights, bool exclude_known) {
    const std::size_t n = target.n();
    const std::size_t nr = target.n_rel;
    const std::size_t b = target.channels();
    LossResult res;
    res.dlogits.assign(n * n * b, 0.0);

    // First pass: count included cells so the gradient carries the final 1/N.
    std::size_t included = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < nr; ++k)
                if (!exclude_known || (!support.at(i, j, k) && !noisy.at(i, j, k))) ++included;
            ++included;  // no-edge channel
        }
    if (included == 0) throw EmptyLossSupport("every cell excluded from the loss");
    res.included_cells = included;
    const double inv_n = 1.0 / static_cast<double>(included);

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < b; ++k) {
                double y;
                if (k < nr) {
                    if (exclude_known && (support.at(i, j, k) || noisy.at(i, j, k))) continue;
                    y = target.at(i, j, k);
                } else {
                    y = target.at(i, j, k);  // derived no-edge occupancy
                }
                const std::size_t idx = (i * n + j) * b + k;
                const double x = output.logits[idx];
                // log(1 + e^{-|x|}) form keeps large logits finite
                const double bce = std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
                loss += weights[k] * bce;
                const double p = 1.0 / (1.0 + std::exp(-x));
                res.dlogits[idx] = weights[k] * (p - y) * inv_n;
            }
        }
    }
    res.loss = loss * inv_n;
    return res;
}

}  // namespace difftsp
