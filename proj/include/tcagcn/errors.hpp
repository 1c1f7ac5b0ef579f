#pragma once

#include <stdexcept>
#include <string>

namespace tcagcn {

/// Bad input: malformed files, invalid configuration, violated preconditions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operand shapes do not agree.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// NaN/Inf produced or training diverged.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Misuse of the tape (non-scalar loss, detached graph, double backward).
class AutodiffError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace tcagcn
