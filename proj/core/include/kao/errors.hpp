#pragma once

#include <stdexcept>
#include <string>

namespace kao {

// Exit-code contract: 0 success, 2 config error, 3 data error, 4 numeric divergence.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition violations on in-memory operations (shape mismatch, bad range).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kao
