#pragma once

#include <stdexcept>
#include <string>

namespace guideflow {

// Error hierarchy shared across the library. Config problems map to CLI
// exit code 2, everything else to 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ConstructionFailure : std::runtime_error {
    explicit ConstructionFailure(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& what) : std::runtime_error(what) {}
};

struct AllZero : std::runtime_error {
    explicit AllZero(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateRange : std::runtime_error {
    explicit DegenerateRange(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct UnresolvedKey : std::runtime_error {
    explicit UnresolvedKey(const std::string& what) : std::runtime_error(what) {}
};

struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

struct ObjectiveFailure : std::runtime_error {
    explicit ObjectiveFailure(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace guideflow
