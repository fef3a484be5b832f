#pragma once

#include <stdexcept>
#include <string>

namespace nrtr {

// Base for all recoverable errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad config keys/values, impossible model geometry,
// out-of-range hyperparameters. CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// File-level problems: missing files, malformed PGM/manifests, rejected
// input samples. CLI exit code 2.
struct IoError : Error {
    using Error::Error;
};

// Data corruption: checksum failures, mismatching checkpoint manifests.
// CLI exit code 3.
struct IntegrityError : Error {
    using Error::Error;
};

} // namespace nrtr
