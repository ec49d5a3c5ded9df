#pragma once

#include <stdexcept>

namespace safetune {

/// Raised for malformed inputs: bad knob files, out-of-range values, unknown names.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when the Gram matrix cannot be factored even after jitter escalation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace safetune
