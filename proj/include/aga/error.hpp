#pragma once

#include <stdexcept>
#include <string>

namespace aga {

// Error taxonomy shared by the library and the CLI exit-code mapping.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (CLI exit 2).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or incompatible dataset / checkpoint files (CLI exit 3).
struct DataError : Error {
    using Error::Error;
};

// Non-finite values or other numeric breakdown at runtime (CLI exit 4).
struct NumericError : Error {
    using Error::Error;
};

// Dimension mismatches between tensors or model components.
struct ShapeError : Error {
    using Error::Error;
};

}  // namespace aga
