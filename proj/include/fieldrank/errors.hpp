// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fieldrank {

/// Invalid or inconsistent configuration. Surfaces as exit code 2 in the CLI.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input data or a failed runtime precondition.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fieldrank
