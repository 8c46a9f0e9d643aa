#pragma once

#include <stdexcept>
#include <string>

namespace cadiff {

// Base class for everything this library throws. The CLI catches it at the
// top level and turns it into a single "error: ..." line on stderr.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad shapes or out-of-range indices in tensor operations.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration field. Message names the offending field.
struct ConfigError : Error {
    using Error::Error;
};

// A module precondition or postcondition failed at runtime.
struct ContractError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required (loss, activations).
struct NumericError : Error {
    using Error::Error;
};

// Malformed or inconsistent files (datasets, checkpoints, configs).
struct IoError : Error {
    using Error::Error;
};

// Degenerate metric input, e.g. a zero-norm vector in a cosine.
struct MetricError : Error {
    using Error::Error;
};

}  // namespace cadiff
