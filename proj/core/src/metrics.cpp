#include "difftsp/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "difftsp/errors.hpp"

namespace difftsp {

namespace {

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

using TripleSet = std::unordered_set<Triple, TripleHash>;

}  // namespace

std::string MetricsReport::to_kv() const {
    std::ostringstream os;
    os << "assumption " << assumption << "\n"
       << "t_pred " << t_pred << "\n"
       << "t_wa " << t_wa << "\n"
       << "t_wa_plus " << t_wa_plus << "\n"
       << "t_test " << t_test << "\n"
       << "jprecision " << fmt(jprecision) << "\n"
       << "strecall " << fmt(strecall) << "\n"
       << "f_tsp " << fmt(f_tsp) << "\n";
    return os.str();
}

std::string MetricsReport::to_json() const {
    std::ostringstream os;
    os << "{\"t_pred\":" << t_pred << ",\"t_wa\":" << t_wa << ",\"t_wa_plus\":" << t_wa_plus
       << ",\"t_test\":" << t_test << ",\"jprecision\":" << fmt(jprecision)
       << ",\"strecall\":" << fmt(strecall) << ",\"f_tsp\":" << fmt(f_tsp)
       << ",\"assumption\":\"" << assumption << "\"}";
    return os.str();
}

MetricsReport metrics_from_counts(std::size_t n_pred, std::size_t n_wa, std::size_t n_wa_plus,
                                  std::size_t n_test, const std::string& assumption) {
    if (n_test == 0) throw EmptyTestSet("test set is empty");
    MetricsReport r;
    r.t_pred = n_pred;
    r.t_wa = n_wa;
    r.t_wa_plus = n_wa_plus;
    r.t_test = n_test;
    r.assumption = assumption;
    if (n_pred == 0 || n_wa_plus == 0) return r;  // all-zero scores by decision
    double jp = 0.5 * (static_cast<double>(n_wa_plus) / static_cast<double>(n_wa) +
                       static_cast<double>(n_wa_plus) / static_cast<double>(n_pred));
    double st = std::sqrt(static_cast<double>(n_wa_plus) / static_cast<double>(n_test));
    r.jprecision = jp;
    r.strecall = st;
    if (jp > 0.0 && st > 0.0) r.f_tsp = 2.0 * jp * st / (jp + st);
    return r;
}

MetricsReport cwa_metrics(const std::vector<Triple>& pred, const std::vector<Triple>& test) {
    TripleSet test_set(test.begin(), test.end());
    TripleSet pred_set(pred.begin(), pred.end());
    std::size_t plus = 0;
    for (const Triple& t : pred_set)
        if (test_set.count(t)) ++plus;
    // Under CWA every prediction is judgeable: T^CWA = T_pred.
    return metrics_from_counts(pred_set.size(), pred_set.size(), plus, test_set.size(), "CWA");
}

MetricsReport rs_powa_metrics(const std::vector<Triple>& pred, const std::vector<Triple>& test,
                              const std::vector<Triple>& train, const SimMatrix& sim) {
    TripleSet test_set(test.begin(), test.end());
    TripleSet pred_set(pred.begin(), pred.end());

    // Ordered entity pair -> relations known from train or test.
    std::unordered_map<std::uint64_t, std::vector<RelationId>> known;
    auto pair_key = [](const Triple& t) {
        return (static_cast<std::uint64_t>(t.head) << 32) | t.tail;
    };
    for (const Triple& t : train) known[pair_key(t)].push_back(t.relation);
    for (const Triple& t : test) known[pair_key(t)].push_back(t.relation);

    std::size_t plus = 0, minus = 0;
    for (const Triple& t : pred_set) {
        if (test_set.count(t)) {
            ++plus;
            continue;
        }
        auto it = known.find(pair_key(t));
        if (it == known.end()) continue;
        for (RelationId r2 : it->second) {
            if (sim.at(t.relation, r2) < sim.theta) {
                ++minus;
                break;
            }
        }
    }
    return metrics_from_counts(pred_set.size(), plus + minus, plus, test_set.size(), "RS-POWA");
}

SimMatrix default_similarity(const Graph& train, double theta) {
    if (train.size() == 0) throw EmptyDataset("similarity needs a nonempty train graph");
    const std::size_t nr = train.vocab().num_relations();
    const std::size_t nv = train.vocab().num_entities();
    SimMatrix sim;
    sim.n_rel = nr;
    sim.theta = theta;
    sim.values.assign(nr * nr, 0.0);

    // Profile: head-entity histogram followed by tail-entity histogram.
    std::vector<std::vector<double>> profiles(nr, std::vector<double>(2 * nv, 0.0));
    for (const Triple& t : train.triples()) {
        profiles[t.relation][t.head] += 1.0;
        profiles[t.relation][nv + t.tail] += 1.0;
    }
    std::vector<double> norms(nr, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        double s = 0.0;
        for (double x : profiles[r]) s += x * x;
        norms[r] = std::sqrt(s);
    }
    for (std::size_t r = 0; r < nr; ++r) {
        for (std::size_t s = r; s < nr; ++s) {
            double v;
            if (r == s) {
                v = 1.0;
            } else if (norms[r] == 0.0 || norms[s] == 0.0) {
                v = 0.0;
            } else {
                double dot = 0.0;
                for (std::size_t e = 0; e < 2 * nv; ++e) dot += profiles[r][e] * profiles[s][e];
                v = dot / (norms[r] * norms[s]);
            }
            sim.values[r * nr + s] = v;
            sim.values[s * nr + r] = v;
        }
    }
    return sim;
}

SimMatrix load_similarity(const std::string& path, const Vocab& vocab, double theta) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw InvalidSimilarity("empty similarity file");
    if (!header.empty() && header.back() == '\r') header.pop_back();

    std::vector<RelationId> order;
    {
        std::istringstream hs(header);
        std::string name;
        while (std::getline(hs, name, '\t')) {
            if (!vocab.has_relation(name))
                throw InvalidSimilarity("unknown relation in similarity file: " + name);
            order.push_back(vocab.relation_id(name));
        }
    }
    const std::size_t nr = vocab.num_relations();
    if (order.size() != nr) throw InvalidSimilarity("similarity header does not cover all relations");

    SimMatrix sim;
    sim.n_rel = nr;
    sim.theta = theta;
    sim.values.assign(nr * nr, 0.0);
    for (std::size_t row = 0; row < nr; ++row) {
        std::string line;
        if (!std::getline(in, line)) throw InvalidSimilarity("similarity file has too few rows");
        std::istringstream ls(line);
        for (std::size_t col = 0; col < nr; ++col) {
            double v;
            if (!(ls >> v)) throw InvalidSimilarity("similarity row too short");
            if (v < 0.0 || v > 1.0) throw InvalidSimilarity("similarity value out of [0,1]");
            sim.values[order[row] * nr + order[col]] = v;
        }
    }
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t s = 0; s < nr; ++s)
            if (std::abs(sim.values[r * nr + s] - sim.values[s * nr + r]) > 1e-6)
                throw InvalidSimilarity("similarity matrix is not symmetric");
    return sim;
}

}  // namespace difftsp
