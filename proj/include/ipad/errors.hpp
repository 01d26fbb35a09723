#pragma once

#include <stdexcept>
#include <string>

namespace ipad {

/// Base class for all library failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// OS-level read/write failure on a file that was expected to work.
struct IoError : Error {
    using Error::Error;
};

/// Structurally invalid file contents: bad magic, truncation, malformed line.
struct FormatError : Error {
    using Error::Error;
};

/// Invalid configuration, arguments, or missing inputs. The CLI maps this
/// (and FormatError on user inputs) to exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

} // namespace ipad
