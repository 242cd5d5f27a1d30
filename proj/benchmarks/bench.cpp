#include <benchmark/benchmark.h>

#include <numeric>
#include <random>
#include <vector>

#include "difftsp/metrics.hpp"
#include "difftsp/sampling.hpp"
#include "difftsp/training.hpp"

using namespace difftsp;

namespace {

std::vector<Triple> random_triples(std::size_t n, std::size_t nr, std::size_t count,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> de(0, static_cast<std::uint32_t>(n - 1));
    std::uniform_int_distribution<std::uint32_t> dr(0, static_cast<std::uint32_t>(nr - 1));
    std::set<std::tuple<EntityId, RelationId, EntityId>> seen;
    std::vector<Triple> out;
    while (out.size() < count) {
        EntityId h = de(rng), t = de(rng);
        if (h == t) continue;
        RelationId r = dr(rng);
        if (seen.insert({h, r, t}).second) out.push_back({h, r, t});
    }
    return out;
}

AdjacencyState make_state(std::size_t n, std::size_t nr, std::size_t edges, std::uint64_t seed) {
    std::vector<EntityId> ents(n);
    std::iota(ents.begin(), ents.end(), 0);
    return adjacency_from_triples(ents, nr, random_triples(n, nr, edges, seed));
}

}  // namespace

static void BM_DenoiseForward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0)), nr = 3;
    AdjacencyState support = make_state(n, nr, 3 * n, 1);
    AdjacencyState noisy = make_state(n, nr, n, 2);
    ModelConfig mc{.n_rel = nr, .embed_dim = 16, .n_dit = 2, .l_rce = 2};
    DenoiserParams params = DenoiserParams::init(mc, 3);
    for (auto _ : state) {
        DenoiserOutput out = denoise(noisy, support, 5, params);
        benchmark::DoNotOptimize(out.logits.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * nr);
}
BENCHMARK(BM_DenoiseForward)->Arg(16)->Arg(32)->Arg(64);

static void BM_TrainStep(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0)), nr = 3;
    Task task;
    task.entity_list.resize(n);
    std::iota(task.entity_list.begin(), task.entity_list.end(), 0);
    auto all = random_triples(n, nr, 4 * n, 7);
    task.support.assign(all.begin(), all.begin() + n);
    task.query.assign(all.begin() + n, all.end());
    ModelConfig mc{.n_rel = nr, .embed_dim = 16, .n_dit = 2, .l_rce = 2};
    NoiseSchedule sched = make_schedule(10);
    LossConfig lc;
    DenoiserParams params = DenoiserParams::init(mc, 9);
    Adam adam(mc, 1e-3);
    std::uint64_t step = 0;
    for (auto _ : state) {
        double loss = train_step(task, params, adam, sched, lc, step++);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(32);

static void BM_SampleRun(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0)), nr = 3;
    AdjacencyState support = make_state(n, nr, 3 * n, 11);
    ModelConfig mc{.n_rel = nr, .embed_dim = 16, .n_dit = 2, .l_rce = 2};
    DenoiserParams params = DenoiserParams::init(mc, 12);
    NoiseSchedule sched = make_schedule(10);
    SamplerConfig cfg;
    cfg.steps = 10;
    cfg.gamma = 0.5;
    CounterRng rng(13);
    std::uint64_t run = 0;
    for (auto _ : state) {
        SampleResult r = sample(support, params, sched, cfg, rng, run++);
        benchmark::DoNotOptimize(r.predicted.data());
    }
}
BENCHMARK(BM_SampleRun)->Arg(16)->Arg(32);

static void BM_ForwardSample(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0)), nr = 3;
    AdjacencyState clean = make_state(n, nr, 4 * n, 21);
    NoiseSchedule sched = make_schedule(20);
    CounterRng rng(22);
    std::uint64_t task_id = 0;
    for (auto _ : state) {
        AdjacencyState noisy = forward_sample(clean, 10, sched, rng, task_id++);
        benchmark::DoNotOptimize(noisy.cells.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * nr);
}
BENCHMARK(BM_ForwardSample)->Arg(32)->Arg(64);

static void BM_CwaMetrics(benchmark::State& state) {
    const std::size_t n = 200, nr = 5;
    auto pred = random_triples(n, nr, 5000, 31);
    auto test = random_triples(n, nr, 5000, 32);
    for (auto _ : state) {
        MetricsReport r = cwa_metrics(pred, test);
        benchmark::DoNotOptimize(r.f_tsp);
    }
    state.SetItemsProcessed(state.iterations() * pred.size());
}
BENCHMARK(BM_CwaMetrics);

BENCHMARK_MAIN();
