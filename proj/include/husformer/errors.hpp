#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hus {

// Shape/dimension incompatibility between tensors.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value (bad hyperparameter, unknown key, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (sample/spec mismatch, label out of range, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or truncated file; carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, std::size_t byte_offset)
        : std::runtime_error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

// Numerical failure during evaluation (non-finite loss, ...).
struct EvalError : std::runtime_error {
    explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hus
