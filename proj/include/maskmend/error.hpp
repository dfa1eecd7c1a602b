#pragma once

#include <stdexcept>
#include <string>

namespace maskmend {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, header, truncated payload).
class FormatError : public Error {
public:
    using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

// Caller-supplied argument violates a documented precondition.
class ParameterError : public Error {
public:
    using Error::Error;
};

// A value violates a type invariant (mask label outside {0,1}, etc).
class InvariantError : public Error {
public:
    using Error::Error;
};

class ManifestError : public Error {
public:
    using Error::Error;
};

// Loss became non-finite during gradient descent.
class TrainingDivergence : public Error {
public:
    using Error::Error;
};

// Not enough trace epochs to make a decision.
class NotEnoughData : public Error {
public:
    using Error::Error;
};

// Warning-level: the requested ensemble cannot carry any spread
// (MC dropout on a model without dropout).
class DegenerateEnsemble : public Error {
public:
    using Error::Error;
};

} // namespace maskmend
