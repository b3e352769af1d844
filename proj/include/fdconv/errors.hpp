// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fdconv {

/// Base class for all fdconv errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes disagree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An index lies outside its container's extent.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a stated precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Config file malformed, inconsistent, or containing unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File I/O failure or unparseable on-disk format.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in an invalid sequence (e.g. stale forward cache,
/// checkpoint loaded onto a mismatched network).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Metric evaluation requested on an empty confusion matrix.
class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdconv
