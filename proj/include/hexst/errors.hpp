#pragma once

#include <stdexcept>
#include <string>

namespace hexst {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.

class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DegenerateInputError : public InputError {
public:
    using InputError::InputError;
};

// Shape or configuration mismatch between values that must agree.
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An internal contract was violated (e.g. window coverage).
class ConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SlotCollisionError : public ConsistencyError {
public:
    using ConsistencyError::ConsistencyError;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hexst
