#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>

#include "difftsp/checkpoint.hpp"
#include "difftsp/config.hpp"
#include "difftsp/dataset.hpp"
#include "difftsp/errors.hpp"
#include "difftsp/metrics.hpp"
#include "difftsp/training.hpp"

namespace {

using namespace difftsp;

constexpr int kExitConfig = 2;
constexpr int kExitMismatch = 3;
constexpr int kExitRuntime = 4;

std::size_t thread_cap() {
    // Commands are currently single-threaded; the env var is honored as a cap
    // so configs stay forward-compatible.
    const char* env = std::getenv("DIFFTSP_THREADS");
    if (!env) return 1;
    try {
        std::size_t n = std::stoull(env);
        return n > 0 ? n : 1;
    } catch (const std::exception&) {
        throw ConfigError("DIFFTSP_THREADS must be a positive integer");
    }
}

void echo_resolved(const RunConfig& cfg, const std::string& command) {
    std::cout << "command " << command << "\n"
              << "threads " << thread_cap() << "\n"
              << cfg.resolved() << "---\n";
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed for " + path);
}

int cmd_train(const RunConfig& cfg) {
    DatasetBundle bundle = load_bundle(cfg.train_path, cfg.valid_path, cfg.test_path);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;

    std::ostringstream log;
    auto on_epoch = [&log](const EpochLog& e) {
        std::ostringstream line;
        line.precision(10);
        line << "epoch " << e.epoch << " mean_loss " << e.mean_loss << " val_f_tsp "
             << e.val_f_tsp << "\n";
        std::cout << line.str();
        log << line.str();
    };
    Checkpoint ckpt = train(bundle, tc, on_epoch);

    std::filesystem::create_directories(cfg.out);
    save_checkpoint(ckpt, cfg.resolved_checkpoint());
    write_file(cfg.out + "/train.log", log.str());
    write_file(cfg.out + "/resolved_config.txt", cfg.resolved());
    std::ostringstream tail;
    tail.precision(10);
    tail << "checkpoint " << cfg.resolved_checkpoint() << "\nbest_val_f_tsp "
         << ckpt.best_val_f_tsp << "\n";
    std::cout << tail.str();
    return 0;
}

int cmd_sample(const RunConfig& cfg) {
    DatasetBundle bundle = load_bundle(cfg.train_path, cfg.valid_path, cfg.test_path);
    Checkpoint ckpt = load_checkpoint(cfg.resolved_checkpoint());
    verify_checkpoint(ckpt, *bundle.vocab);

    std::filesystem::create_directories(cfg.out);
    SnapshotSink sink;
    if (!cfg.snapshot_steps.empty()) {
        sink = [&](std::size_t sg, const Trajectory& traj) {
            export_snapshots(traj, *bundle.vocab, nullptr,
                             cfg.out + "/snapshots/subgraph_" + std::to_string(sg));
        };
    }
    std::vector<Triple> pred =
        predict(bundle.train, ckpt, cfg.train.subgraph_cap, cfg.seed,
                cfg.sample_mode == "repaint", cfg.snapshot_steps, sink);

    // Lexicographic by names for stable diffs.
    std::vector<std::string> lines;
    lines.reserve(pred.size());
    for (const Triple& t : pred)
        lines.push_back(bundle.vocab->entity_name(t.head) + "\t" +
                        bundle.vocab->relation_name(t.relation) + "\t" +
                        bundle.vocab->entity_name(t.tail));
    std::sort(lines.begin(), lines.end());
    std::ostringstream body;
    for (const std::string& l : lines) body << l << "\n";
    write_file(cfg.resolved_predictions(), body.str());
    write_file(cfg.out + "/resolved_config.txt", cfg.resolved());
    std::cout << "predictions " << cfg.resolved_predictions() << "\nn_pred " << lines.size()
              << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    DatasetBundle bundle = load_bundle(cfg.train_path, cfg.valid_path, cfg.test_path);
    std::vector<RawTriple> raw = load_tsv(cfg.resolved_predictions());

    // Out-of-vocab names count against |T_pred| only, never crash.
    std::unordered_set<std::string> unresolved_lines;
    std::vector<Triple> pred;
    for (const auto& [h, r, t] : raw) {
        if (bundle.vocab->has_entity(h) && bundle.vocab->has_relation(r) &&
            bundle.vocab->has_entity(t)) {
            pred.push_back(
                {bundle.vocab->entity_id(h), bundle.vocab->relation_id(r), bundle.vocab->entity_id(t)});
        } else {
            unresolved_lines.insert(h + "\t" + r + "\t" + t);
        }
    }
    const std::size_t unresolved = unresolved_lines.size();

    MetricsReport rep;
    if (cfg.assumption == "cwa") {
        rep = cwa_metrics(pred, bundle.test.triples());
        rep = metrics_from_counts(rep.t_pred + unresolved, rep.t_wa + unresolved, rep.t_wa_plus,
                                  rep.t_test, rep.assumption);
    } else {
        SimMatrix sim = cfg.similarity == "default"
                            ? default_similarity(bundle.train, cfg.theta)
                            : load_similarity(cfg.similarity, *bundle.vocab, cfg.theta);
        rep = rs_powa_metrics(pred, bundle.test.triples(), bundle.train.triples(), sim);
        rep = metrics_from_counts(rep.t_pred + unresolved, rep.t_wa, rep.t_wa_plus, rep.t_test,
                                  rep.assumption);
    }
    std::cout << rep.to_kv() << "unresolved " << unresolved << "\n" << rep.to_json() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"triple-set prediction over knowledge graphs"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string flag_snapshot_steps, flag_assumption, flag_similarity, flag_mode, flag_out;
    std::string flag_seed;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file path");
        sub->add_option("--seed", flag_seed, "run seed (overrides run.seed)");
        sub->add_option("--out", flag_out, "output directory (overrides run.out)");
        sub->add_option("--snapshot-steps", flag_snapshot_steps,
                        "CSV of completed-denoise-step snapshot points");
        sub->add_option("--assumption", flag_assumption, "cwa or rs-powa");
        sub->add_option("--similarity", flag_similarity, "default or a TSV matrix path");
        sub->add_option("--mode", flag_mode, "standard or repaint");
        for (const std::string& key : difftsp::RunConfig::keys()) {
            sub->add_option_function<std::string>(
                "--" + key,
                [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); });
        }
    };
    CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    CLI::App* sample_cmd = app.add_subcommand("sample", "generate predictions from a checkpoint");
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a prediction file");
    add_common(train_cmd);
    add_common(sample_cmd);
    add_common(eval_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        difftsp::RunConfig cfg = difftsp::load_run_config(config_path);
        for (const auto& [key, value] : overrides) cfg.apply(key, value);
        if (!flag_seed.empty()) cfg.apply("run.seed", flag_seed);
        if (!flag_out.empty()) cfg.apply("run.out", flag_out);
        if (!flag_snapshot_steps.empty()) cfg.apply("sample.snapshot_steps", flag_snapshot_steps);
        if (!flag_assumption.empty()) cfg.apply("eval.assumption", flag_assumption);
        if (!flag_similarity.empty()) cfg.apply("eval.similarity", flag_similarity);
        if (!flag_mode.empty()) cfg.apply("sample.mode", flag_mode);
        cfg.validate(/*need_data=*/true);
        echo_resolved(cfg, command);

        if (command == "train") return cmd_train(cfg);
        if (command == "sample") return cmd_sample(cfg);
        return cmd_eval(cfg);
    } catch (const difftsp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const difftsp::DatasetMismatch& e) {
        std::cerr << "artifact mismatch: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const difftsp::CorruptCheckpoint& e) {
        std::cerr << "artifact mismatch: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const difftsp::WrongCheckpointMode& e) {
        std::cerr << "artifact mismatch: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
