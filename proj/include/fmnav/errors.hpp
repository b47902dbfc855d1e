#pragma once

#include <stdexcept>
#include <string>

namespace fmnav {

// Violated precondition or API misuse (caller bug).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed or non-finite data reaching an operation.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during training or integration. Carries the step at
// which the failure was detected (-1 when not applicable).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& msg, long step = -1)
        : std::runtime_error(step >= 0 ? msg + " (step " + std::to_string(step) + ")" : msg),
          step_(step) {}

    long step() const { return step_; }

private:
    long step_;
};

}  // namespace fmnav
