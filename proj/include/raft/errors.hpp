// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace raft {

/// Non-finite input, out-of-range id, or a mathematically invalid request.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Tensor shapes that do not agree for the requested op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Violated precondition on a call (bad spec, empty input, misuse of the tape).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss with no contributing targets (every label ignored).
class UndefinedLossError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Corrupt, truncated, or version-mismatched file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint whose architecture differs from the one requested.
class ConfigMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int64_t step, const std::string& what)
      : std::runtime_error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

  int64_t step() const noexcept { return step_; }

 private:
  int64_t step_;
};

}  // namespace raft
