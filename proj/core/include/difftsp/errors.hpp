#pragma once

#include <stdexcept>
#include <string>

namespace difftsp {

// Base class for all engine errors. Subclasses carry the failure category
// so callers (and tests) can match on type rather than message text.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyDataset : Error { using Error::Error; };
struct InvalidId : Error { using Error::Error; };
struct InvalidSubset : Error { using Error::Error; };
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    std::size_t line_number;
};
struct IoError : Error { using Error::Error; };
struct InvalidRho : Error { using Error::Error; };
struct InvalidSteps : Error { using Error::Error; };
struct InvalidStep : Error { using Error::Error; };
struct InvalidProbability : Error { using Error::Error; };
struct InvalidDim : Error { using Error::Error; };
struct IncompatibleGraphs : Error { using Error::Error; };
struct DegenerateDataset : Error { using Error::Error; };
struct EmptyLossSupport : Error { using Error::Error; };
struct DatasetMismatch : Error { using Error::Error; };
struct CorruptCheckpoint : Error { using Error::Error; };
struct WrongCheckpointMode : Error { using Error::Error; };
struct EmptyTestSet : Error { using Error::Error; };
struct InvalidSimilarity : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace difftsp
