// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace vidprism {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree with what an op requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A sequence length is not divisible by a pathway rate.
class RateError : public Error {
 public:
  using Error::Error;
};

/// Two pathways cannot exchange information (lengths do not divide).
class PathwayError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File does not follow the expected binary layout (bad magic/version).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File ended early or a record is malformed; carries the byte offset.
class CorruptionError : public Error {
 public:
  CorruptionError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Records in one dataset disagree (e.g. feature width).
class InconsistencyError : public Error {
 public:
  using Error::Error;
};

class GradCheckError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string checkpoint)
      : Error(what), checkpoint_(std::move(checkpoint)) {}
  /// Path of the last checkpoint written before divergence; empty if none.
  const std::string& last_good_checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

}  // namespace vidprism
