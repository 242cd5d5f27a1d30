#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "difftsp/metrics.hpp"
#include "helpers.hpp"

using namespace difftsp;

TEST_CASE("count fixture: 2453 predictions, 1657 hits, 4598 test") {
    MetricsReport r = metrics_from_counts(2453, 2453, 1657, 4598, "CWA");
    CHECK(r.jprecision == doctest::Approx(0.675).epsilon(0.0015));
    CHECK(r.strecall == doctest::Approx(0.600).epsilon(0.0017));
    CHECK(r.f_tsp == doctest::Approx(0.635).epsilon(0.0016));
}

TEST_CASE("count fixture: 7472 predictions, 4355 judged, 3472 hits, 15843 test") {
    MetricsReport r = metrics_from_counts(7472, 4355, 3472, 15843, "RS-POWA");
    CHECK(std::abs(r.jprecision - 0.630) < 0.001);
    CHECK(std::abs(r.strecall - 0.468) < 0.001);
    CHECK(std::abs(r.f_tsp - 0.537) < 0.001);
}

TEST_CASE("count fixture: 10162 predictions, 6804 judged, 4543 hits, 28727 test") {
    MetricsReport r = metrics_from_counts(10162, 6804, 4543, 28727, "RS-POWA");
    CHECK(std::abs(r.jprecision - 0.557) < 0.001);
    CHECK(std::abs(r.strecall - 0.397) < 0.001);
    CHECK(std::abs(r.f_tsp - 0.464) < 0.001);
}

TEST_CASE("cwa: perfect prediction scores 1 everywhere") {
    auto test = testutil::random_triples(10, 2, 20, 1);
    MetricsReport r = cwa_metrics(test, test);
    CHECK(r.jprecision == doctest::Approx(1.0));
    CHECK(r.strecall == doctest::Approx(1.0));
    CHECK(r.f_tsp == doctest::Approx(1.0));
}

TEST_CASE("cwa: disjoint nonempty prediction scores 0") {
    std::vector<Triple> pred = {{0, 0, 1}};
    std::vector<Triple> test = {{2, 0, 3}};
    MetricsReport r = cwa_metrics(pred, test);
    CHECK(r.jprecision == 0.0);
    CHECK(r.strecall == 0.0);
    CHECK(r.f_tsp == 0.0);
}

TEST_CASE("cwa: empty prediction scores 0, empty test set throws") {
    std::vector<Triple> test = {{0, 0, 1}};
    MetricsReport r = cwa_metrics({}, test);
    CHECK(r.f_tsp == 0.0);
    CHECK(r.t_pred == 0);
    CHECK_THROWS_AS(cwa_metrics({{0, 0, 1}}, {}), EmptyTestSet);
}

TEST_CASE("cwa deduplicates both sets") {
    std::vector<Triple> pred = {{0, 0, 1}, {0, 0, 1}, {2, 0, 3}};
    std::vector<Triple> test = {{0, 0, 1}, {0, 0, 1}};
    MetricsReport r = cwa_metrics(pred, test);
    CHECK(r.t_pred == 2);
    CHECK(r.t_wa_plus == 1);
    CHECK(r.t_test == 1);
}

TEST_CASE("rs-powa: all-similar matrix never judges a miss false") {
    SimMatrix sim;
    sim.n_rel = 2;
    sim.theta = 0.5;
    sim.values.assign(4, 1.0);
    std::vector<Triple> pred = {{0, 0, 1}, {2, 1, 3}};
    std::vector<Triple> test = {{0, 0, 1}};
    std::vector<Triple> train = {{2, 0, 3}};  // same pair, different relation
    MetricsReport r = rs_powa_metrics(pred, test, train, sim);
    CHECK(r.t_wa == r.t_wa_plus);  // POWA- is empty
    CHECK(r.t_wa_plus == 1);
}

TEST_CASE("rs-powa: dissimilar relation on a known pair counts as wrong") {
    SimMatrix sim;
    sim.n_rel = 2;
    sim.theta = 0.5;
    sim.values = {1.0, 0.0, 0.0, 1.0};  // r0 vs r1 dissimilar
    std::vector<Triple> pred = {{2, 1, 3}};  // (2,3) known under r0
    std::vector<Triple> test = {{0, 0, 1}};
    std::vector<Triple> train = {{2, 0, 3}};
    MetricsReport r = rs_powa_metrics(pred, test, train, sim);
    CHECK(r.t_wa == 1);
    CHECK(r.t_wa_plus == 0);
    CHECK(r.f_tsp == 0.0);
}

TEST_CASE("rs-powa agrees with a brute-force oracle on random data") {
    const std::size_t n = 12, nr = 3;
    auto pred = testutil::random_triples(n, nr, 50, 5);
    auto test = testutil::random_triples(n, nr, 40, 6);
    auto train = testutil::random_triples(n, nr, 60, 7);
    SimMatrix sim;
    sim.n_rel = nr;
    sim.theta = 0.5;
    sim.values.assign(nr * nr, 0.0);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t s = r; s < nr; ++s) {
            double v = r == s ? 1.0 : d(rng);
            sim.values[r * nr + s] = v;
            sim.values[s * nr + r] = v;
        }
    MetricsReport got = rs_powa_metrics(pred, test, train, sim);

    // oracle: triple-nested loops over deduplicated pred x known
    std::set<std::tuple<EntityId, RelationId, EntityId>> ps, ts, known;
    for (const Triple& t : pred) ps.insert({t.head, t.relation, t.tail});
    for (const Triple& t : test) ts.insert({t.head, t.relation, t.tail});
    for (const Triple& t : train) known.insert({t.head, t.relation, t.tail});
    for (const auto& t : ts) known.insert(t);
    std::size_t plus = 0, minus = 0;
    for (const auto& [h, r, t] : ps) {
        if (ts.count({h, r, t})) {
            ++plus;
            continue;
        }
        bool wrong = false;
        for (const auto& [h2, r2, t2] : known)
            if (h2 == h && t2 == t && sim.values[r * nr + r2] < sim.theta) wrong = true;
        if (wrong) ++minus;
    }
    CHECK(got.t_pred == ps.size());
    CHECK(got.t_wa_plus == plus);
    CHECK(got.t_wa == plus + minus);
}

TEST_CASE("default similarity: diagonal ones, disjoint profiles orthogonal, symmetric") {
    // r0 and r1 share entities, r2 lives on a disjoint set
    Vocab v = testutil::make_vocab(8, 3);
    Graph g = graph_from_triples(
        v, {{0, 0, 1}, {1, 0, 2}, {0, 1, 1}, {2, 1, 0}, {5, 2, 6}, {6, 2, 7}});
    SimMatrix sim = default_similarity(g, 0.5);
    for (std::size_t r = 0; r < 3; ++r) CHECK(sim.at(r, r) == 1.0);
    CHECK(sim.at(0, 2) == 0.0);
    CHECK(sim.at(2, 0) == 0.0);
    CHECK(sim.at(0, 1) > 0.0);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t s = 0; s < 3; ++s)
            CHECK(std::abs(sim.at(r, s) - sim.at(s, r)) < 1e-12);
    // cosine values live in [0, 1]
    for (double x : sim.values) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
    CHECK_THROWS_AS(default_similarity(graph_from_triples(v, {}), 0.5), EmptyDataset);
}

namespace {
struct TempFile {
    std::string path;
    explicit TempFile(const std::string& content) {
        static int n = 0;
        path = (std::filesystem::temp_directory_path() /
                ("difftsp_sim_" + std::to_string(::getpid()) + "_" + std::to_string(n++) + ".tsv"))
                   .string();
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};
}  // namespace

TEST_CASE("load_similarity parses, validates and realigns by name") {
    Vocab v = testutil::make_vocab(2, 2);  // relations r0, r1
    TempFile ok("r0\tr1\n1.0\t0.25\n0.25\t1.0\n");
    SimMatrix sim = load_similarity(ok.path, v, 0.5);
    CHECK(sim.at(0, 1) == doctest::Approx(0.25));
    CHECK(sim.at(0, 0) == 1.0);

    // permuted header loads and realigns
    TempFile perm("r1\tr0\n1.0\t0.75\n0.75\t1.0\n");
    SimMatrix ps = load_similarity(perm.path, v, 0.5);
    CHECK(ps.at(0, 1) == doctest::Approx(0.75));
    CHECK(ps.at(1, 1) == 1.0);

    TempFile bad_range("r0\tr1\n1.0\t1.2\n1.2\t1.0\n");
    CHECK_THROWS_AS(load_similarity(bad_range.path, v, 0.5), InvalidSimilarity);
    TempFile asym("r0\tr1\n1.0\t0.2\n0.9\t1.0\n");
    CHECK_THROWS_AS(load_similarity(asym.path, v, 0.5), InvalidSimilarity);
    TempFile unknown("r0\tzz\n1.0\t0.2\n0.2\t1.0\n");
    CHECK_THROWS_AS(load_similarity(unknown.path, v, 0.5), InvalidSimilarity);
    TempFile short_rows("r0\tr1\n1.0\t0.2\n");
    CHECK_THROWS_AS(load_similarity(short_rows.path, v, 0.5), InvalidSimilarity);
}

TEST_CASE("report serialization carries all fields") {
    MetricsReport r = metrics_from_counts(10, 8, 4, 25, "CWA");
    std::string kv = r.to_kv();
    CHECK(kv.find("t_pred 10") != std::string::npos);
    CHECK(kv.find("f_tsp") != std::string::npos);
    std::string js = r.to_json();
    CHECK(js.find("\"t_wa\":8") != std::string::npos);
    CHECK(js.find("\"assumption\":\"CWA\"") != std::string::npos);
}
