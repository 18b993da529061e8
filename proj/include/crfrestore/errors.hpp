#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crf {

/// Patch or pixel index outside the valid range.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Two operands whose sizes must agree do not.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Aggregation left a pixel without any contributing patch.
struct CoverageError : std::runtime_error {
  CoverageError(std::size_t row_, std::size_t col_)
      : std::runtime_error("pixel (" + std::to_string(row_) + ", " + std::to_string(col_) +
                           ") is not covered by any patch"),
        row(row_),
        col(col_) {}
  std::size_t row;
  std::size_t col;
};

/// Failed factorization, non-finite iterate or similar numerical breakdown.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable, unwritable or malformed file.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace crf
