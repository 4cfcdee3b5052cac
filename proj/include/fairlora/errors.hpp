// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace fairlora {

/// A caller broke an operation's preconditions (shape mismatch, empty input,
/// non-scalar backward root, missing group weight, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid user-supplied configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairlora
