#pragma once

#include <stdexcept>
#include <string>

namespace corrstyle {

// Root of every error raised by the library. The CLI maps ValidationError
// subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Shapes, resolutions or channel counts that do not line up.
class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Bad configuration values, unknown hook targets, invalid locators.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A checkpoint or extractor asset could not be resolved or loaded.
class CheckpointError : public Error {
public:
    using Error::Error;
};

// NaN/Inf detected; the message names the timestep or stage.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace corrstyle
