#pragma once

#include <stdexcept>
#include <string>

namespace fedvol {

// Bad user input: malformed files, out-of-range parameters, shape mismatches.
// The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : ValidationError {
    explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

struct ParameterError : ValidationError {
    explicit ParameterError(const std::string& msg) : ValidationError(msg) {}
};

struct SizeError : ValidationError {
    explicit SizeError(const std::string& msg) : ValidationError(msg) {}
};

struct ConfigError : ValidationError {
    explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

// A runtime self-check failed (consensus properties, corrupt checkpoint, ...).
// The CLI maps these to exit code 2.
struct VerificationError : std::runtime_error {
    explicit VerificationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fedvol
