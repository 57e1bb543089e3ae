#pragma once

#include <stdexcept>
#include <string>

namespace geb {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite ones are required.
struct NumericError : std::domain_error {
    using std::domain_error::domain_error;
};

// Misuse of the gradient tape (backward on untraced values, mixed tapes...).
struct TracingError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Sequence longer than the model or cache allows.
struct LengthError : std::length_error {
    using std::length_error::length_error;
};

// Token id outside the vocabulary.
struct VocabularyError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Optimizer or trainer state that does not line up with its inputs.
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace geb
