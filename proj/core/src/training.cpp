#include "difftsp/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "difftsp/errors.hpp"
#include "difftsp/metrics.hpp"
#include "difftsp/rng.hpp"
#include "difftsp/sampling.hpp"

namespace difftsp {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (max_epochs < 1) throw ConfigError("train.epochs must be positive");
    if (patience < 1 || patience > max_epochs)
        throw ConfigError("train.patience must be in [1, epochs]");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("train.rho must be in (0,1)");
    if (n_s < 1) throw ConfigError("train.ns must be positive");
    if (t_total < 1) throw ConfigError("train.steps must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("sample.gamma must be in (0,1)");
    if (subgraph_cap < 2) throw ConfigError("train.cap must be at least 2");
    if (embed_dim < 2 || embed_dim % 2 != 0) throw ConfigError("model.dim must be even");
}

namespace {

FreqTable adjacency_frequencies(const AdjacencyState& adj) {
    FreqTable f;
    f.relation_counts.assign(adj.n_rel, 0);
    const std::size_t n = adj.n();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            bool any = false;
            for (std::size_t k = 0; k < adj.n_rel; ++k)
                if (adj.at(i, j, k)) {
                    ++f.relation_counts[k];
                    any = true;
                }
            if (!any) ++f.absent_pairs;
        }
    return f;
}

std::vector<Triple> predict_over_parts(const Graph& train, const std::vector<Subgraph>& parts,
                                       const Checkpoint& ckpt, std::uint64_t seed, bool repaint,
                                       const std::vector<std::size_t>& snapshot_steps = {},
                                       const SnapshotSink& sink = {}) {
    NoiseSchedule schedule = make_schedule(ckpt.t_total);
    SamplerConfig scfg;
    scfg.steps = ckpt.t_total;
    scfg.gamma = ckpt.gamma;
    scfg.snapshot_steps = snapshot_steps;
    CounterRng rng(seed);
    std::unordered_set<Triple, TripleHash> merged;
    for (std::size_t sg = 0; sg < parts.size(); ++sg) {
        const Subgraph& part = parts[sg];
        AdjacencyState support =
            adjacency_from_triples(part.entity_list, ckpt.params.cfg.n_rel, part.triples);
        std::uint64_t run_id = derive_seed(seed, 0x5a3, sg);
        SampleResult sr = repaint
                              ? sample_repaint(support, ckpt.params, schedule, scfg, rng, run_id)
                              : sample(support, ckpt.params, schedule, scfg, rng, run_id);
        merged.insert(sr.predicted.begin(), sr.predicted.end());
        if (sink) sink(sg, sr.trajectory);
    }
    // Drop anything already known from training, including edges whose
    // endpoints were only co-resident in a different subgraph.
    std::vector<Triple> out;
    for (const Triple& t : merged)
        if (!train.contains(t)) out.push_back(t);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

double train_step(const Task& task, DenoiserParams& params, Adam& adam,
                  const NoiseSchedule& schedule, const LossConfig& loss_cfg,
                  std::uint64_t step_seed) {
    const std::size_t nr = params.cfg.n_rel;
    AdjacencyState target = adjacency_from_triples(task.entity_list, nr, task.query);
    AdjacencyState support = adjacency_from_triples(task.entity_list, nr, task.support);

    CounterRng rng(step_seed);
    std::size_t t = 1 + rng.bits({0x74}) % schedule.total_steps;
    AdjacencyState noisy = forward_sample(target, t, schedule, rng, task.seed);

    std::vector<double> weights;
    if (loss_cfg.weighted && !task.query.empty()) {
        FreqTable freq = adjacency_frequencies(target);
        weights = loss_weights(freq, freq.absent_pairs, loss_cfg.clip_lo, loss_cfg.clip_hi);
    } else {
        weights.assign(target.channels(), 1.0);
    }

    CacheHandle cache;
    AdjacencyState fused = fuse_graphs(support, noisy);
    DenoiserOutput out = denoise_fused(fused, t, params, cache.get());
    LossResult lr =
        masked_weighted_bce(out, target, support, noisy, weights, loss_cfg.exclude_known);

    DenoiserParams grads = DenoiserParams::zeros(params.cfg);
    backward(params, *cache.get(), lr.dlogits, grads);
    adam.update(params, grads);
    return lr.loss;
}

Checkpoint train(const DatasetBundle& bundle, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
    cfg.validate();
    ModelConfig mcfg;
    mcfg.n_rel = bundle.vocab->num_relations();
    mcfg.embed_dim = cfg.embed_dim;
    mcfg.n_dit = cfg.n_dit;
    mcfg.l_rce = cfg.l_rce;

    std::vector<Subgraph> parts = partition_graph(bundle.train, cfg.subgraph_cap, cfg.seed);
    std::vector<Task> tasks;
    for (std::size_t sg = 0; sg < parts.size(); ++sg) {
        if (cfg.whole_graph_mode) {
            // Reconstruction training: the whole subgraph is the target and
            // there is no support conditioning.
            Task t;
            t.entity_list = parts[sg].entity_list;
            t.query = parts[sg].triples;
            t.subgraph_id = sg;
            t.seed = derive_seed(cfg.seed, sg);
            tasks.push_back(std::move(t));
        } else {
            auto sg_tasks = generate_tasks(parts[sg], sg, cfg.rho, cfg.n_s, cfg.seed);
            tasks.insert(tasks.end(), sg_tasks.begin(), sg_tasks.end());
        }
    }

    NoiseSchedule schedule = make_schedule(cfg.t_total);
    DenoiserParams params = DenoiserParams::init(mcfg, derive_seed(cfg.seed, 0xbeef));
    Adam adam(mcfg, cfg.lr);

    Checkpoint ckpt;
    ckpt.whole_graph_mode = cfg.whole_graph_mode;
    ckpt.t_total = cfg.t_total;
    ckpt.gamma = cfg.gamma;
    ckpt.rho = cfg.rho;
    ckpt.n_s = cfg.n_s;
    ckpt.vocab_fingerprint = bundle.vocab->fingerprint();
    ckpt.lr = cfg.lr;

    DenoiserParams best_params = params;
    double best_val = -1.0;
    std::size_t stale = 0;

    std::vector<std::size_t> order(tasks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xe90c, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const Task& task = tasks[order[pos]];
            loss_sum += train_step(task, params, adam, schedule, cfg.loss,
                                   derive_seed(cfg.seed, epoch, order[pos]));
        }

        // Validation under CWA: train split as support, valid split as test.
        double val = 0.0;
        if (bundle.valid.size() > 0) {
            Checkpoint probe = ckpt;
            probe.params = params;
            auto pred = predict_over_parts(bundle.train, parts, probe,
                                           derive_seed(cfg.seed, 0xeba1), false);
            val = cwa_metrics(pred, bundle.valid.triples()).f_tsp;
        }

        if (on_epoch) {
            EpochLog log;
            log.epoch = epoch;
            log.mean_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
            log.val_f_tsp = val;
            on_epoch(log);
        }

        if (val > best_val) {
            best_val = val;
            best_params = params;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }

    ckpt.params = std::move(best_params);
    ckpt.adam_step = adam.step_count;
    ckpt.adam_m = std::move(adam.m);
    ckpt.adam_v = std::move(adam.v);

    // Quantize to the storage precision, then re-score so the recorded
    // validation F_TSP is reproducible from the saved file.
    quantize_params(ckpt.params);
    quantize_params(ckpt.adam_m);
    quantize_params(ckpt.adam_v);
    if (bundle.valid.size() > 0) {
        auto pred =
            predict_over_parts(bundle.train, parts, ckpt, derive_seed(cfg.seed, 0xeba1), false);
        ckpt.best_val_f_tsp = cwa_metrics(pred, bundle.valid.triples()).f_tsp;
    }
    return ckpt;
}

std::vector<Triple> predict(const Graph& train, const Checkpoint& ckpt, std::size_t subgraph_cap,
                            std::uint64_t seed, bool repaint,
                            const std::vector<std::size_t>& snapshot_steps,
                            const SnapshotSink& sink) {
    if (repaint && !ckpt.whole_graph_mode)
        throw WrongCheckpointMode("repaint sampling needs a whole-graph checkpoint");
    std::vector<Subgraph> parts = partition_graph(train, subgraph_cap, seed);
    return predict_over_parts(train, parts, ckpt, seed, repaint, snapshot_steps, sink);
}

}  // namespace difftsp
