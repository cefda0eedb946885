#pragma once

#include <stdexcept>
#include <string>

namespace dadl {

// Base class for all library errors. Subclasses mark the contract that was
// violated so callers (and the CLI exit-code mapping) can tell config
// problems apart from numeric failures.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shapes or axes disagree.
struct DimensionError : Error {
    using Error::Error;
};

// Index or label out of range.
struct IndexError : Error {
    using Error::Error;
};

// Bad option combination or invalid configuration value.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed file contents (IDX, CIFAR, checkpoint).
struct FormatError : Error {
    using Error::Error;
};

// Underlying I/O failed (short read, missing file).
struct IoError : Error {
    using Error::Error;
};

// NaN/Inf where a finite value is required.
struct NumericError : Error {
    using Error::Error;
};

// API misuse: preconditions on call sequencing or argument structure.
struct ContractError : Error {
    using Error::Error;
};

// Tape replayed without re-recording, or backward from a non-recorded value.
struct TapeError : Error {
    using Error::Error;
};

}  // namespace dadl
