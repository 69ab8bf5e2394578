#pragma once

#include <stdexcept>
#include <string>

namespace rankpipe {

/// Malformed or contract-violating input data. Maps to CLI exit code 1.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad or inconsistent configuration. Maps to CLI exit code 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class BackendErrorKind { Timeout, Transport, Status };

/// Failure talking to a model backend. Maps to CLI exit code 2.
class BackendError : public std::runtime_error {
public:
    BackendError(BackendErrorKind kind, bool retryable, const std::string& what)
        : std::runtime_error(what), kind_(kind), retryable_(retryable) {}

    BackendErrorKind kind() const { return kind_; }
    bool retryable() const { return retryable_; }

private:
    BackendErrorKind kind_;
    bool retryable_;
};

}  // namespace rankpipe
