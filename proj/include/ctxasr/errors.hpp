#pragma once
#include <stdexcept>
#include <string>

namespace ctxasr {

// Thrown for invalid flag/argument combinations (CLI exit code 2).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for unreadable/malformed files and corpora (CLI exit code 3).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when training produces a non-finite loss (CLI exit code 4).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ctxasr
