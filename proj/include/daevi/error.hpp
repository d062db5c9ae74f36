#pragma once

#include <stdexcept>
#include <string>

namespace daevi {

// Base for all library errors. Subclasses map to CLI exit codes:
// ConfigError/ContractError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (bad extents, indivisible groups, unknown key).
struct ConfigError : Error {
    using Error::Error;
};

// API misuse: a precondition on shapes or call order was violated.
struct ContractError : Error {
    using Error::Error;
};

// Shape/dimension mismatch between operands.
struct ShapeError : ContractError {
    using ContractError::ContractError;
};

// Malformed or truncated file content.
struct DataError : Error {
    using Error::Error;
};

// Non-finite values or failed numerical checks.
struct NumericError : Error {
    using Error::Error;
};

} // namespace daevi
