#pragma once

#include <stdexcept>
#include <string>

namespace reshape {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array shapes or counts that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A file or document that does not follow its documented layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Data that parses but violates a structural invariant.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied value outside the accepted domain.
class ValueError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (singular system, divergence, degenerate geometry).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace reshape
