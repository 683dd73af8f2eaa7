#pragma once

#include <stdexcept>
#include <string>

namespace slidemil {

// Error categories map 1:1 onto CLI exit codes / C API status codes:
// 2 usage, 3 I/O, 4 validation, 5 numerical abort.
enum class ErrorCode : int {
    ok = 0,
    usage = 2,
    io = 3,
    validation = 4,
    numeric = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Caller misused an API: non-scalar backward root, local view fed to the
// teacher, malformed command line.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(ErrorCode::usage, msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ErrorCode::io, msg) {}
};

// Bad values: out-of-range parameters, non-normalized distributions,
// config/checkpoint mismatches.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(ErrorCode::validation, msg) {}
};

// Shape mismatch between tensors; message names both shapes.
class DimensionError : public ValidationError {
public:
    explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

// Training diverged (NaN/Inf loss); message names the step.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ErrorCode::numeric, msg) {}
};

}  // namespace slidemil
