#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "difftsp/errors.hpp"
#include "difftsp/graph.hpp"
#include "difftsp/rng.hpp"

namespace difftsp {

// Linear absorbing-state noise schedule: alpha[t] = 1 - t/T is the cumulative
// probability that an originally present edge is still present at step t.
struct NoiseSchedule {
    std::size_t total_steps = 0;
    std::vector<double> alpha;  // size total_steps + 1, alpha[0] = 1, alpha[T] = 0

    // Per-step survival alpha[t] / alpha[t-1]; defined as 0 at t = T.
    double step_survival(std::size_t t) const;

    // Unmask probability u(t) = (alpha[t-1] - alpha[t]) / (1 - alpha[t]);
    // equals 1/t under the linear schedule.
    double unmask_prob(std::size_t t) const;
};

// 2x2 row-stochastic transition over {present, M}; the M row is absorbing.
struct TransitionMatrix {
    std::array<std::array<double, 2>, 2> p;  // [from][to], index 0 = present, 1 = M
};

NoiseSchedule make_schedule(std::size_t t_total);

TransitionMatrix transition_matrix(const NoiseSchedule& schedule, std::size_t t, bool cumulative);

// Independently masks each present real-channel cell with probability
// 1 - alpha[t]. Absent cells stay absent; the no-edge channel is untouched.
// Draws are addressed by (task_id, t, i, j, k) so results are independent of
// iteration order.
AdjacencyState forward_sample(const AdjacencyState& clean, std::size_t t,
                              const NoiseSchedule& schedule, const CounterRng& rng,
                              std::uint64_t task_id);

struct CellDistribution {
    double p_present;
    double p_mask;
};

// Posterior over the previous-step state of one cell given its current state
// and the model's existence probability. A non-masked cell is a point mass on
// itself; a masked cell unmasks with probability u(t) * p_exist.
CellDistribution reverse_cell_distribution(bool present_at_t, double p_exist, std::size_t t,
                                           const NoiseSchedule& schedule);

}  // namespace difftsp
