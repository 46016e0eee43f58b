#pragma once

#include <stdexcept>
#include <string>

namespace gcm {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed domain values (bad intervals, inconsistent units, ...).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Incompatible tensor/graph shapes.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Zero-norm feature rows where cosine similarity is required.
class DegenerateFeatureError : public Error {
public:
    explicit DegenerateFeatureError(const std::string& msg) : Error(msg) {}
};

// Bad or inconsistent configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File I/O and parse problems (message carries the line number when known).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Loss became non-finite during training.
class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(const std::string& msg) : Error(msg) {}
};

} // namespace gcm
