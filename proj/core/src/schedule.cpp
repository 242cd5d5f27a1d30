#include "difftsp/schedule.hpp"

namespace difftsp {

double NoiseSchedule::step_survival(std::size_t t) const {
    if (t < 1 || t > total_steps) throw InvalidStep("t out of range");
    double prev = alpha[t - 1];
    if (prev == 0.0) return 0.0;  // limit of the ratio at the absorbed end
    return alpha[t] / prev;
}

double NoiseSchedule::unmask_prob(std::size_t t) const {
    if (t < 1 || t > total_steps) throw InvalidStep("t out of range");
    // (alpha[t-1] - alpha[t]) / (1 - alpha[t]) in closed form under the linear
    // schedule; the subtraction loses the exact 1/t value to rounding.
    return 1.0 / static_cast<double>(t);
}

NoiseSchedule make_schedule(std::size_t t_total) {
    if (t_total < 1) throw InvalidSteps("need at least one diffusion step");
    NoiseSchedule s;
    s.total_steps = t_total;
    s.alpha.resize(t_total + 1);
    for (std::size_t t = 0; t <= t_total; ++t)
        s.alpha[t] = 1.0 - static_cast<double>(t) / static_cast<double>(t_total);
    return s;
}

TransitionMatrix transition_matrix(const NoiseSchedule& schedule, std::size_t t, bool cumulative) {
    if (t > schedule.total_steps || (!cumulative && t < 1))
        throw InvalidStep("t out of range");
    double survive = cumulative ? schedule.alpha[t] : schedule.step_survival(t);
    TransitionMatrix q;
    q.p[0] = {survive, 1.0 - survive};
    q.p[1] = {0.0, 1.0};
    return q;
}

AdjacencyState forward_sample(const AdjacencyState& clean, std::size_t t,
                              const NoiseSchedule& schedule, const CounterRng& rng,
                              std::uint64_t task_id) {
    if (t > schedule.total_steps) throw InvalidStep("t out of range");
    AdjacencyState noisy = clean;
    if (t == 0) return noisy;
    const double survive = schedule.alpha[t];
    const std::size_t n = clean.n();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < clean.n_rel; ++k) {
                if (!clean.at(i, j, k)) continue;
                if (rng.uniform({task_id, t, i, j, k}) >= survive) noisy.set(i, j, k, 0);
            }
        }
    }
    noisy.refresh_no_edge();
    return noisy;
}

CellDistribution reverse_cell_distribution(bool present_at_t, double p_exist, std::size_t t,
                                           const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.total_steps) throw InvalidStep("t out of range");
    if (!(p_exist >= 0.0 && p_exist <= 1.0))
        throw InvalidProbability("p_exist outside [0,1]");
    if (present_at_t) return {1.0, 0.0};
    double p = schedule.unmask_prob(t) * p_exist;
    return {p, 1.0 - p};
}

}  // namespace difftsp
