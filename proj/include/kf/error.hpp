#pragma once

#include <stdexcept>
#include <string>

namespace kf {

// Bad user input: malformed measure, out-of-range parameter. Maps to CLI exit code 1.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A computation could not reach its certified target. Maps to CLI exit code 2.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidInput(what);
}

}  // namespace kf
