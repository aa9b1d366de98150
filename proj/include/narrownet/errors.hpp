#pragma once

#include <stdexcept>
#include <string>

namespace narrownet {

// Caller supplied something unusable (maps to CLI exit code 2).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public InputError {
public:
    using InputError::InputError;
};

class UnsupportedVersionError : public ParseError {
public:
    using ParseError::ParseError;
};

class SobolevViolation : public InputError {
public:
    using InputError::InputError;
};

class DomainViolation : public InputError {
public:
    using InputError::InputError;
};

// Requested accuracy needs a construction that does not fit (exit code 3).
class InfeasibleConstruction : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Broken internal precondition (exit code 1).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class TrainingDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace narrownet
