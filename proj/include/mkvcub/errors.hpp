#pragma once

#include <stdexcept>
#include <string>

namespace mkvcub {

/// Invalid configuration or construction parameters (maps to CLI exit 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite state or other numerical breakdown (maps to CLI exit 3).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Tree growth exceeded the configured node budget (maps to CLI exit 4).
class BudgetError : public std::runtime_error {
public:
    explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mkvcub
