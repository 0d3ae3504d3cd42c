#pragma once

#include <stdexcept>
#include <string>

namespace hrcm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: wrong dimensions, invalid config values, bad files.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Geometry that makes an operation undefined (coincident points, camera on the plane).
class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class InsufficientFeaturesError : public Error {
public:
    using Error::Error;
};

/// Homography estimation failed (degenerate sample set, no consensus).
class EstimationError : public Error {
public:
    using Error::Error;
};

class NoPathError : public Error {
public:
    using Error::Error;
};

} // namespace hrcm
