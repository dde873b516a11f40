#pragma once

#include <stdexcept>
#include <string>

namespace podmtl {

/// Base for all errors raised by this library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration, bad usage, or incompatible shapes. CLI exit code 1.
struct config_error : error {
    using error::error;
};

/// Operand shapes are incompatible. A configuration problem at heart.
struct shape_error : config_error {
    using config_error::config_error;
};

/// Malformed or inconsistent input data. CLI exit code 2.
struct data_error : error {
    using error::error;
};

/// Training produced non-finite values. CLI exit code 3.
struct divergence_error : error {
    using error::error;
};

/// An experiment arm failed. CLI exit code 4.
struct arm_error : error {
    using error::error;
};

}  // namespace podmtl
