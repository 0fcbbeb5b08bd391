#pragma once

#include <stdexcept>
#include <string>

namespace pathssl {

/// Configuration documents that fail schema or value validation.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Input data that violates an operation's preconditions (bad files,
/// missing classes, dimension mismatches, infeasible geometry ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: divergence, non-finite values where finite are required.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace pathssl
