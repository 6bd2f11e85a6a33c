#pragma once

#include <stdexcept>
#include <string>

namespace dft {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes incompatible for an op.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Dataset / checkpoint content problems.
class DataError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Non-finite loss or similar failure during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace dft
