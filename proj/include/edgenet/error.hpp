#pragma once

#include <stdexcept>
#include <string>

namespace edgenet {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches and invalid extents.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid configuration (bad fractions, empty datasets, missing calib sets, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed in-memory values (bad one-hot targets, out-of-range pixels, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite arithmetic is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed serialized artifacts. Message carries the byte offset.
class FormatError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failures.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace edgenet
