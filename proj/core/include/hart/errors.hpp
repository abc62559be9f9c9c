#pragma once

#include <stdexcept>
#include <string>

namespace hart {

// Invalid run/model configuration. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data, vocabulary mismatch, empty dataset. Exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable, corrupt, or incompatible checkpoint. Exit code 4.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hart
