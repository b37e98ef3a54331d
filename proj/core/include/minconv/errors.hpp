#pragma once

#include <stdexcept>
#include <string>

namespace minconv {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Pearson coefficient requested for a sample with zero variance.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

/// Empty batch, empty dataset, or every Monte Carlo sample discarded.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A filter whose weights are all zero has no defined rescaling ratio.
class ZeroFilterError : public Error {
 public:
  using Error::Error;
};

class ZeroStatisticsError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data (bad magic, bad record size, bad label).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File shorter than its header announces.
class LengthError : public Error {
 public:
  using Error::Error;
};

class IncompatibleCheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace minconv
