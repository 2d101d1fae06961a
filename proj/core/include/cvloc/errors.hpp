#pragma once

#include <stdexcept>
#include <string>

namespace cvloc {

// Base for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched tensor shapes, bad dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// Bad or missing input data: manifests, images, checkpoints, indexes.
struct DataError : Error {
    using Error::Error;
};

// A manifest or config references a file that is not there.
struct MissingAssetError : DataError {
    using DataError::DataError;
};

// A file exists but does not parse.
struct ParseError : DataError {
    using DataError::DataError;
};

// Non-finite loss, diverged training, numeric preconditions.
struct NumericError : Error {
    using Error::Error;
};

// Bad command-line or config usage.
struct UsageError : Error {
    using Error::Error;
};

}  // namespace cvloc
