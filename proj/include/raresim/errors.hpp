#ifndef RARESIM_ERRORS_HPP
#define RARESIM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace raresim {

// Error taxonomy. The C API and the CLI map these onto status/exit codes,
// so new error kinds should derive from one of the four below.

// Bad argument or malformed/inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Model callbacks returned non-finite values, a solve blew up, an estimator
// degenerated in a way the caller asked to treat as fatal (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// File IO and parsing of artifact files.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Catalog lookups.
class LookupError : public std::runtime_error {
public:
    explicit LookupError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace raresim

#endif
