#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace episignal {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input. `line()` is 1-based; 0 when the error is not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class CoverageError : public Error {
public:
    using Error::Error;
};

/// Numerical failure inside a fit (non-PD kernel, NaN loss, repeated collapse).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace episignal
