#pragma once

#include <stdexcept>
#include <string>

namespace lrf {

/// Raised for malformed or inconsistent inputs (bad shapes, short series,
/// invalid hyper-parameters). The CLI maps it to exit code 2.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure fails (singular system, divergence,
/// iteration cap). The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InputError(what);
}

}  // namespace detail
}  // namespace lrf
