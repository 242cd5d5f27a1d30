#include "difftsp/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "difftsp/errors.hpp"

namespace difftsp {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

std::string fmt(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

}  // namespace

std::vector<std::size_t> parse_step_list(const std::string& csv) {
    std::vector<std::size_t> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_uint("sample.snapshot_steps", item));
    }
    return out;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
    if (key == "data.train") train_path = value;
    else if (key == "data.valid") valid_path = value;
    else if (key == "data.test") test_path = value;
    else if (key == "run.out") out = value;
    else if (key == "run.seed") seed = parse_uint(key, value);
    else if (key == "train.lr") train.lr = parse_double(key, value);
    else if (key == "train.epochs") train.max_epochs = parse_uint(key, value);
    else if (key == "train.patience") train.patience = parse_uint(key, value);
    else if (key == "train.rho") train.rho = parse_double(key, value);
    else if (key == "train.ns") train.n_s = parse_uint(key, value);
    else if (key == "train.cap") train.subgraph_cap = parse_uint(key, value);
    else if (key == "train.steps") train.t_total = parse_uint(key, value);
    else if (key == "train.whole_graph") train.whole_graph_mode = parse_bool(key, value);
    else if (key == "model.dim") train.embed_dim = parse_uint(key, value);
    else if (key == "model.ndit") train.n_dit = parse_uint(key, value);
    else if (key == "model.lrce") train.l_rce = parse_uint(key, value);
    else if (key == "loss.weighted") train.loss.weighted = parse_bool(key, value);
    else if (key == "loss.exclude_known") train.loss.exclude_known = parse_bool(key, value);
    else if (key == "loss.clip_lo") train.loss.clip_lo = parse_double(key, value);
    else if (key == "loss.clip_hi") train.loss.clip_hi = parse_double(key, value);
    else if (key == "sample.gamma") train.gamma = parse_double(key, value);
    else if (key == "sample.bernoulli") bernoulli = parse_bool(key, value);
    else if (key == "sample.mode") sample_mode = value;
    else if (key == "sample.snapshot_steps") snapshot_steps = parse_step_list(value);
    else if (key == "sample.checkpoint") checkpoint_path = value;
    else if (key == "sample.predictions") predictions_path = value;
    else if (key == "eval.assumption") assumption = value;
    else if (key == "eval.similarity") similarity = value;
    else if (key == "eval.theta") theta = parse_double(key, value);
    else throw ConfigError("unknown config key: " + key);
}

void RunConfig::validate(bool need_data) const {
    train.validate();
    if (sample_mode != "standard" && sample_mode != "repaint")
        throw ConfigError("sample.mode must be standard or repaint");
    if (assumption != "cwa" && assumption != "rs-powa")
        throw ConfigError("eval.assumption must be cwa or rs-powa");
    if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("eval.theta must be in (0,1]");
    if (need_data) {
        const std::pair<const char*, const std::string*> paths[] = {
            {"data.train", &train_path}, {"data.valid", &valid_path}, {"data.test", &test_path}};
        for (const auto& [key, path] : paths) {
            if (path->empty()) throw ConfigError(std::string(key) + " is required");
            if (!std::filesystem::exists(*path))
                throw ConfigError(std::string(key) + ": no such file: " + *path);
        }
    }
}

std::string RunConfig::resolved_checkpoint() const {
    return checkpoint_path.empty() ? out + "/checkpoint.bin" : checkpoint_path;
}

std::string RunConfig::resolved_predictions() const {
    return predictions_path.empty() ? out + "/predictions.tsv" : predictions_path;
}

std::string RunConfig::resolved() const {
    std::ostringstream os;
    auto steps_csv = [this] {
        std::string s;
        for (std::size_t i = 0; i < snapshot_steps.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(snapshot_steps[i]);
        }
        return s;
    };
    os << "data.test " << test_path << "\n"
       << "data.train " << train_path << "\n"
       << "data.valid " << valid_path << "\n"
       << "eval.assumption " << assumption << "\n"
       << "eval.similarity " << similarity << "\n"
       << "eval.theta " << fmt(theta) << "\n"
       << "loss.clip_hi " << fmt(train.loss.clip_hi) << "\n"
       << "loss.clip_lo " << fmt(train.loss.clip_lo) << "\n"
       << "loss.exclude_known " << (train.loss.exclude_known ? "true" : "false") << "\n"
       << "loss.weighted " << (train.loss.weighted ? "true" : "false") << "\n"
       << "model.dim " << train.embed_dim << "\n"
       << "model.lrce " << train.l_rce << "\n"
       << "model.ndit " << train.n_dit << "\n"
       << "run.out " << out << "\n"
       << "run.seed " << seed << "\n"
       << "sample.bernoulli " << (bernoulli ? "true" : "false") << "\n"
       << "sample.checkpoint " << resolved_checkpoint() << "\n"
       << "sample.gamma " << fmt(train.gamma) << "\n"
       << "sample.mode " << sample_mode << "\n"
       << "sample.predictions " << resolved_predictions() << "\n"
       << "sample.snapshot_steps " << steps_csv() << "\n"
       << "train.cap " << train.subgraph_cap << "\n"
       << "train.epochs " << train.max_epochs << "\n"
       << "train.lr " << fmt(train.lr) << "\n"
       << "train.ns " << train.n_s << "\n"
       << "train.patience " << train.patience << "\n"
       << "train.rho " << fmt(train.rho) << "\n"
       << "train.steps " << train.t_total << "\n"
       << "train.whole_graph " << (train.whole_graph_mode ? "true" : "false") << "\n";
    return os.str();
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = {
        "data.train",     "data.valid",        "data.test",
        "run.out",        "run.seed",          "train.lr",
        "train.epochs",   "train.patience",    "train.rho",
        "train.ns",       "train.cap",         "train.steps",
        "train.whole_graph", "model.dim",      "model.ndit",
        "model.lrce",     "loss.weighted",     "loss.exclude_known",
        "loss.clip_lo",   "loss.clip_hi",      "sample.gamma",
        "sample.bernoulli", "sample.mode",     "sample.snapshot_steps",
        "sample.checkpoint", "sample.predictions", "eval.assumption",
        "eval.similarity", "eval.theta"};
    return k;
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t sep = line.find('=');
        if (sep == std::string::npos) sep = line.find_first_of(" \t");
        if (sep == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key value'");
        std::string key = trim(line.substr(0, sep));
        std::string value = trim(line.substr(sep + 1));
        cfg.apply(key, value);
    }
    return cfg;
}

}  // namespace difftsp
