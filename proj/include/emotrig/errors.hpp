#pragma once

#include <stdexcept>
#include <string>

namespace emotrig {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Malformed input file or record.
class ParseError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Network failure or non-success HTTP status after retries.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int status = 0) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

class TimeoutError : public TransportError {
public:
    explicit TimeoutError(const std::string& what) : TransportError(what, 0) {}
};

/// Well-formed transport, unexpected payload shape.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// No usable rewrite candidate could be produced.
class RewriteError : public Error {
public:
    using Error::Error;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class DegenerateError : public Error {
public:
    using Error::Error;
};

} // namespace emotrig
