#pragma once

#include <stdexcept>
#include <string>

namespace hwmnet {

// Argument/shape violations use std::invalid_argument directly. The error
// kinds below get their own types so callers (notably the CLI) can map them
// to distinct exit codes.

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnsupportedFormat : std::runtime_error {
    explicit UnsupportedFormat(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidDataset : std::runtime_error {
    explicit InvalidDataset(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnsupportedCheckpoint : std::runtime_error {
    explicit UnsupportedCheckpoint(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidState : std::runtime_error {
    explicit InvalidState(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::invalid_argument(msg);
    }
}

}  // namespace hwmnet
