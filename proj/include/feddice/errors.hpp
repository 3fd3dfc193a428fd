#pragma once

#include <stdexcept>
#include <string>

namespace feddice {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// netflow
struct EmptyWindowError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct MissingFamilyError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };

// models
struct ShapeError : Error { using Error::Error; };
struct ArchError : Error { using Error::Error; };

// metrics
struct LengthMismatchError : Error { using Error::Error; };
struct EmptyMatrixError : Error { using Error::Error; };
struct TooFewSamplesError : Error { using Error::Error; };

// federation
struct EmptyInputError : Error { using Error::Error; };
struct MetricsUnavailableError : Error { using Error::Error; };

// policies
struct UnknownModelError : Error { using Error::Error; };
struct PolicyError : Error { using Error::Error; };
struct DuplicateIdError : Error { using Error::Error; };
struct UnknownIdError : Error { using Error::Error; };

// simulation
struct UnknownDeviceError : Error { using Error::Error; };

}  // namespace feddice
