#pragma once

#include <stdexcept>
#include <string>

namespace heisim {

// Domain errors thrown by module operations.  Each maps to one failure
// condition named in a module contract; none of them are recoverable
// mid-computation, callers either fix the input or abort the experiment.

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SingularTheta : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateG : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidParam : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonFinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OffGridTime : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct GridMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonIntegrable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedBeta : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ZeroNorm : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateWeights : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoContraction : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientSamples : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigInvalid : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace heisim
