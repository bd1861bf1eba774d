#pragma once

#include <stdexcept>
#include <string>

namespace cromo {

// Malformed input, bad configuration or violated precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Failure while computing: non-finite values, I/O, corrupt files.
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Throws ValidationError(message) when cond is false.
inline void require(bool cond, const std::string& message) {
    if (!cond) throw ValidationError(message);
}

}  // namespace cromo
