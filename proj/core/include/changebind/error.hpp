#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace changebind {

enum class ErrorCategory { config, data, shape, numeric, usage, io };

std::string_view to_string(ErrorCategory category) noexcept;

/// Base class for every error thrown by the library. The category maps onto
/// the CLI exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorCategory::config, message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorCategory::data, message) {}
};

/// Dimension mismatch. `axis` names the offending axis when one is known.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message, int axis = -1)
        : Error(ErrorCategory::shape, message), axis_(axis) {}

    int axis() const noexcept { return axis_; }

private:
    int axis_;
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error(ErrorCategory::numeric, message) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorCategory::usage, message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::io, message) {}
};

} // namespace changebind
