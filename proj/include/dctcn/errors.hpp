#pragma once

#include <stdexcept>
#include <string>

namespace dctcn {

// Shape or argument inconsistency detected by an op.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent run configuration. CLI exit code 3.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File missing, unreadable, or corrupt. CLI exit code 4.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient, failed gradient check. CLI exit code 5.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dctcn
