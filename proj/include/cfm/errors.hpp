#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cfm {

// Bad input: malformed data, inconsistent configuration, violated preconditions.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input columns do not match the expected schema.
class SchemaError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A Gibbs block produced a non-finite value or could not normalize a conditional.
class NumericalError : public std::runtime_error {
public:
    NumericalError(std::int64_t sweep, int arm, std::string block, const std::string& what)
        : std::runtime_error("numerical failure in block '" + block + "' (arm " + std::to_string(arm) +
                             ", sweep " + std::to_string(sweep) + "): " + what),
          sweep_(sweep), arm_(arm), block_(std::move(block)) {}

    std::int64_t sweep() const noexcept { return sweep_; }
    int arm() const noexcept { return arm_; }
    const std::string& block() const noexcept { return block_; }

private:
    std::int64_t sweep_;
    int arm_;
    std::string block_;
};

// Every cluster probability for one (unit, factor) vanished.
class DegenerateAllocation : public std::runtime_error {
public:
    DegenerateAllocation(long unit, long factor)
        : std::runtime_error("degenerate cluster allocation for unit " + std::to_string(unit) + ", factor " +
                             std::to_string(factor)),
          unit_(unit), factor_(factor) {}

    long unit() const noexcept { return unit_; }
    long factor() const noexcept { return factor_; }

private:
    long unit_;
    long factor_;
};

}  // namespace cfm
