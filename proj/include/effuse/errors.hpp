#pragma once

#include <stdexcept>
#include <string>

namespace effuse {

// Error taxonomy mirrored by the CLI exit codes:
//   config error -> 2, data error -> 3, numeric error -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape/contract violations between tensors or model pieces.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent configuration (also covers unknown override keys).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Corpus/label/file contents violating their schema.
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite values, singular systems, diverged training.
class NumericError : public Error {
public:
    using Error::Error;
};

// Missing or malformed checkpoint state.
class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace effuse
