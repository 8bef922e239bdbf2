#pragma once

#include <stdexcept>
#include <string>

namespace polcolor {

/// Bad caller input: malformed arguments, shape mismatches, unreadable files.
/// The CLI maps this to exit code 2.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical precondition failed at runtime (zero power, non-PSD matrix).
/// The CLI maps this to exit code 3.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace polcolor
