#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difftsp/training.hpp"

namespace difftsp {

// One run's fully-resolved settings: dataset paths, hyperparameters and
// evaluation choices. Populated from a flat "section.key value" file, then
// overridden by command-line flags of the same names.
struct RunConfig {
    std::string train_path;
    std::string valid_path;
    std::string test_path;
    std::string out = "out";
    std::uint64_t seed = 0;

    TrainConfig train;

    std::string checkpoint_path;   // defaults to <out>/checkpoint.bin
    std::string predictions_path;  // defaults to <out>/predictions.tsv
    bool bernoulli = false;
    std::string sample_mode = "standard";  // or "repaint"
    std::vector<std::size_t> snapshot_steps;

    std::string assumption = "cwa";    // or "rs-powa"
    std::string similarity = "default";  // or a TSV matrix path
    double theta = 0.5;

    // Throws ConfigError with the offending key on unknown keys or bad values.
    void apply(const std::string& key, const std::string& value);

    // Path/enum checks beyond TrainConfig::validate(); need_data requires the
    // three dataset files to exist.
    void validate(bool need_data) const;

    std::string resolved_checkpoint() const;
    std::string resolved_predictions() const;

    // Every effective key-value pair, sorted by key, one "key value" per line.
    std::string resolved() const;

    // All recognized config keys, sorted.
    static const std::vector<std::string>& keys();
};

// Parses a flat key-value file ('#' comments, blank lines ignored; separator
// is '=' or whitespace) and applies it over the defaults.
RunConfig load_run_config(const std::string& path);

// Comma-separated list of denoise-step indices, e.g. "1,5,20".
std::vector<std::size_t> parse_step_list(const std::string& csv);

}  // namespace difftsp
