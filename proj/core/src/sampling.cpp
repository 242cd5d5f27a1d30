#include "difftsp/sampling.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include "difftsp/errors.hpp"

namespace difftsp {

namespace {

constexpr std::uint64_t kSaltResolve = 0x52534c56;  // resolution draws
constexpr std::uint64_t kSaltValue = 0x56414c55;    // bernoulli value draws
constexpr std::uint64_t kSaltKnown = 0x4b4e4f57;    // repaint re-noising

AdjacencyState empty_like(const AdjacencyState& ref) {
    AdjacencyState s;
    s.entity_list = ref.entity_list;
    s.n_rel = ref.n_rel;
    s.cells.assign(ref.cells.size(), 0);
    s.refresh_no_edge();
    return s;
}

void maybe_snapshot(Trajectory& traj, const SamplerConfig& cfg, std::size_t done_steps,
                    const AdjacencyState& query_state) {
    if (std::find(cfg.snapshot_steps.begin(), cfg.snapshot_steps.end(), done_steps) !=
        cfg.snapshot_steps.end()) {
        AdjacencyState snap = query_state;
        snap.refresh_no_edge();
        traj.snapshots.emplace_back(done_steps, std::move(snap));
    }
}

}  // namespace

SampleResult sample(const AdjacencyState& support, const DenoiserParams& params,
                    const NoiseSchedule& schedule, const SamplerConfig& cfg, const CounterRng& rng,
                    std::uint64_t run_id) {
    const std::size_t n = support.n();
    const std::size_t nr = support.n_rel;
    const std::size_t b = support.channels();
    const std::size_t t_total = cfg.steps;

    // Query edge state: committed-present cells only. Everything else is the
    // absorbing mask state and stays re-sampleable until it commits.
    AdjacencyState query = empty_like(support);
    std::vector<std::uint8_t> resolved(n * n * nr, 0);

    SampleResult res;
    for (std::size_t t = t_total; t >= 1; --t) {
        AdjacencyState fused = fuse_graphs(support, query);
        DenoiserOutput out = denoise_fused(fused, t, params);
        const double u = schedule.unmask_prob(t);
        const bool final_step = t == 1;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                // no-edge argmax suppression: pending cells of this pair stay
                // masked this step; committed edges are never revoked
                std::size_t argmax = 0;
                double best = out.prob(i, j, 0);
                for (std::size_t k = 1; k < b; ++k) {
                    double p = out.prob(i, j, k);
                    if (p > best) {
                        best = p;
                        argmax = k;
                    }
                }
                if (argmax == b - 1) {
                    if (final_step) {
                        for (std::size_t k = 0; k < nr; ++k)
                            if (!query.at(i, j, k)) resolved[(i * n + j) * nr + k] = 1;
                    }
                    continue;
                }
                for (std::size_t k = 0; k < nr; ++k) {
                    if (support.at(i, j, k)) {
                        resolved[(i * n + j) * nr + k] = 1;  // never emitted
                        continue;
                    }
                    if (query.at(i, j, k)) continue;  // committed, kept
                    if (rng.uniform({run_id, kSaltResolve, t, i, j, k}) < u) {
                        bool present;
                        if (cfg.bernoulli) {
                            present =
                                rng.uniform({run_id, kSaltValue, t, i, j, k}) < out.prob(i, j, k);
                        } else {
                            present = out.prob(i, j, k) > cfg.gamma;
                        }
                        if (present) query.set(i, j, k, 1);
                        resolved[(i * n + j) * nr + k] = 1;
                    }
                }
            }
        }
        maybe_snapshot(res.trajectory, cfg, t_total - t + 1, query);
    }

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < nr; ++k) {
                if (query.at(i, j, k))
                    res.predicted.push_back(
                        {query.entity_list[i], static_cast<RelationId>(k), query.entity_list[j]});
                else if (!resolved[(i * n + j) * nr + k])
                    ++res.unresolved_after_final;
            }
    return res;
}

SampleResult sample_repaint(const AdjacencyState& known, const DenoiserParams& params,
                            const NoiseSchedule& schedule, const SamplerConfig& cfg,
                            const CounterRng& rng, std::uint64_t run_id) {
    const std::size_t n = known.n();
    const std::size_t nr = known.n_rel;
    const std::size_t t_total = cfg.steps;

    // state holds the merged graph fed to the model; unknown-cell commitments
    // are tracked separately so known-cell noise cannot revoke them.
    AdjacencyState state = empty_like(known);
    AdjacencyState unknown_committed = empty_like(known);

    SampleResult res;
    for (std::size_t t = t_total; t >= 1; --t) {
        state.refresh_no_edge();
        DenoiserOutput out = denoise_fused(state, t, params);
        const double u = schedule.unmask_prob(t);
        const double alpha_prev = schedule.alpha[t - 1];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < nr; ++k) {
                    if (known.at(i, j, k)) {
                        // re-noise the clean known edge to level t-1
                        bool keep =
                            rng.uniform({run_id, kSaltKnown, t, i, j, k}) < alpha_prev;
                        state.set(i, j, k, keep ? 1 : 0);
                        continue;
                    }
                    if (unknown_committed.at(i, j, k)) continue;
                    if (rng.uniform({run_id, kSaltResolve, t, i, j, k}) < u) {
                        bool present;
                        if (cfg.bernoulli) {
                            present =
                                rng.uniform({run_id, kSaltValue, t, i, j, k}) < out.prob(i, j, k);
                        } else {
                            present = out.prob(i, j, k) > cfg.gamma;
                        }
                        if (present) {
                            unknown_committed.set(i, j, k, 1);
                            state.set(i, j, k, 1);
                        }
                    }
                }
            }
        }
        maybe_snapshot(res.trajectory, cfg, t_total - t + 1, unknown_committed);
    }

    res.predicted = unknown_committed.extract_triples();
    return res;
}

std::vector<std::string> export_snapshots(const Trajectory& trajectory, const Vocab& vocab,
                                          const std::vector<Triple>* ground_truth,
                                          const std::string& dir) {
    std::unordered_set<Triple, TripleHash> truth;
    if (ground_truth) truth.insert(ground_truth->begin(), ground_truth->end());
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    std::vector<std::string> files;
    for (const auto& [step, adj] : trajectory.snapshots) {
        std::string path = dir + "/snapshot_" + std::to_string(step) + ".tsv";
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + path);
        for (EntityId e : adj.entity_list) out << "# node\t" << vocab.entity_name(e) << "\n";
        for (const Triple& t : adj.extract_triples()) {
            const char* flag = "unknown";
            if (ground_truth) flag = truth.count(t) ? "correct" : "incorrect";
            out << vocab.entity_name(t.head) << '\t' << vocab.relation_name(t.relation) << '\t'
                << vocab.entity_name(t.tail) << '\t' << flag << "\n";
        }
        if (!out) throw IoError("write failed for " + path);
        files.push_back(path);
    }
    return files;
}

}  // namespace difftsp
