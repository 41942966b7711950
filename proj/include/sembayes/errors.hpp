#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sembayes {

// Base for every failure raised by this library that is not a plain
// precondition violation (those use std::invalid_argument / std::domain_error).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Generator or oracle transport failure. Retriable errors (timeouts, 429,
// 5xx) may succeed when re-issued.
class BackendError : public Error {
public:
    BackendError(const std::string& what, bool retriable)
        : Error(what), retriable_(retriable) {}

    bool retriable() const noexcept { return retriable_; }

private:
    bool retriable_;
};

class AuthError : public BackendError {
public:
    explicit AuthError(const std::string& what) : BackendError(what, false) {}
};

// The service answered but lacks something the estimator needs, e.g. token
// log-probabilities.
class CapabilityError : public BackendError {
public:
    explicit CapabilityError(const std::string& what) : BackendError(what, false) {}
};

class MalformedReplyError : public BackendError {
public:
    explicit MalformedReplyError(const std::string& what) : BackendError(what, false) {}
};

class OracleError : public Error {
public:
    using Error::Error;
};

class DatasetError : public Error {
public:
    DatasetError(const std::string& what, std::size_t line)
        : Error(what), line_(line) {}

    // 1-based; 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace sembayes
