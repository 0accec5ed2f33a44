#pragma once

#include <stdexcept>
#include <string>

namespace capsule {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Dataset file unreadable, malformed record, missing field, duplicate id.
class DatasetError : public Error {
public:
    using Error::Error;
};

/// A test statement could not be reduced to a call shape.
class AssertParseError : public Error {
public:
    using Error::Error;
};

/// A completion contained no extractable code block.
class MissingCodeSection : public Error {
public:
    using Error::Error;
};

/// Completion backend failed after retries.
class BackendUnavailable : public Error {
public:
    using Error::Error;
};

/// Replay transcript has no entry for the issued request.
class ReplayExhausted : public Error {
public:
    using Error::Error;
};

/// Execution infrastructure failure (engine unreachable, filesystem error).
/// Never counted as a code-quality failure and never consumes an attempt.
class SandboxUnavailable : public Error {
public:
    using Error::Error;
};

/// Decay fit requested with fewer than two usable points.
class InsufficientPoints : public Error {
public:
    using Error::Error;
};

} // namespace capsule
