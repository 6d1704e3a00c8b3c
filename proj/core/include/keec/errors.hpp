#pragma once

#include <stdexcept>
#include <string>

namespace keec {

// Error taxonomy. The CLI maps these onto process exit codes:
//   ConfigError / IoError -> 2 (bad input), StateError -> 3 (incomplete or
//   inconsistent saved state), NumericError -> 4 (divergence / non-finite).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
struct DimensionError : Error {
    using Error::Error;
};

// Non-finite values, diverged iterations, failed factorizations.
struct NumericError : Error {
    using Error::Error;
};

// Rank-deficient system where a unique solution was required.
struct RankError : Error {
    using Error::Error;
};

// Malformed config file, unknown key, value out of range.
struct ConfigError : Error {
    using Error::Error;
};

// Missing/corrupt data or bundle files.
struct IoError : Error {
    using Error::Error;
};

// Operation needs state (e.g. a value head) the bundle does not hold yet.
struct StateError : Error {
    using Error::Error;
};

}  // namespace keec
