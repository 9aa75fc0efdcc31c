#pragma once

#include <stdexcept>
#include <string>

namespace snp {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched layouts / matrix dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// Bad argument values or invalid configuration.
struct ValueError : Error {
    using Error::Error;
};

// Non-finite numbers during a single evaluation; `index` is the offending
// sample when known, -1 otherwise.
struct NumericError : Error {
    explicit NumericError(const std::string& what, long index_ = -1)
        : Error(what), index(index_) {}
    long index = -1;
};

// Training loop produced a non-finite quantity; `epoch` is where it happened.
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& what, long epoch_)
        : Error(what), epoch(epoch_) {}
    long epoch = 0;
};

// No drift-profile entry stays within the base-drift bound, so the usable
// meta-drift radius cannot be determined.
struct RadiusUnresolvedError : Error {
    using Error::Error;
};

}  // namespace snp
