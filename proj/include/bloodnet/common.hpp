#pragma once

#include <stdexcept>
#include <string>

namespace bloodnet {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input data (catalog rows, config keys, ...).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A numeric routine could not produce a valid result.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace bloodnet
