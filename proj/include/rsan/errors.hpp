#pragma once

#include <stdexcept>
#include <string>

namespace rsan {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not agree. Messages always carry both shapes.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error("dimension error: " + msg) {}
};

// Value outside the operation's domain (empty tensor, non-finite result, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error("domain error: " + msg) {}
};

// A vector with zero norm where a direction is required.
class DegenerateVectorError : public Error {
public:
    explicit DegenerateVectorError(const std::string& msg)
        : Error("degenerate vector: " + msg) {}
};

// API misuse: adjoint state inconsistent with the forward pass, unseen label
// during training, and similar caller-side mistakes.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error("usage error: " + msg) {}
};

// Malformed external data (embedding files, datasets, checkpoints).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// A documented invariant between two arguments was violated.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error("contract violation: " + msg) {}
};

// Filesystem-level failure (open, read, write).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace rsan
