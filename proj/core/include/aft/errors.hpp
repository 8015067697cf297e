// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace aft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A feature, label or checkpoint file is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A dataset manifest is inconsistent or references unusable files.
class ManifestError : public Error {
 public:
  using Error::Error;
};

/// Mini-batch too small for the requested statistic.
class BatchSizeError : public Error {
 public:
  using Error::Error;
};

/// An object was used before it reached the required state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// API misuse (wrong mode, non-scalar backward, bad arguments).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable numeric input.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Report aggregation is missing a required cell.
class AggregationError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace aft
