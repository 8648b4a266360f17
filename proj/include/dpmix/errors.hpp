#pragma once

#include <stdexcept>
#include <string>

namespace dpmix {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AsymmetricCovariance : Error {
    using Error::Error;
};
struct NotPositiveDefinite : Error {
    using Error::Error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct SingularTransform : Error {
    using Error::Error;
};
struct InvalidRadii : Error {
    using Error::Error;
};
struct InfeasibleBudget : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};
struct EmptyCandidates : Error {
    using Error::Error;
};
struct EmptyTable : Error {
    using Error::Error;
};
struct MetricMismatch : Error {
    using Error::Error;
};
struct InvalidConfig : Error {
    using Error::Error;
};
struct IoFailure : Error {
    using Error::Error;
};
struct Overflow : Error {
    using Error::Error;
};

}  // namespace dpmix
