#pragma once

#include <stdexcept>
#include <string>

namespace ccm {

/// Violated precondition or malformed input. Maps to exit code 2 in the CLI.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes do not conform.
class DimensionError : public ContractError {
public:
    explicit DimensionError(const std::string& what) : ContractError(what) {}
};

/// A computation produced NaN/Inf. Maps to exit code 3 in the CLI.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace ccm
