#pragma once

#include <stdexcept>
#include <string>

namespace medvlm {

// Shape/dimension mismatches between tensors or between a tensor and a config.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke an operation contract (non-scalar backward, all-zero mask, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (unknown namespace, rank < 1, unknown task, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed dataset records or invariant violations in data files.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failures (truncated checkpoint, bad magic, ...).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace medvlm
