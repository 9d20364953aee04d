#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "disco/tensor.hpp"

namespace disco {

/// Fixed-capacity FIFO queue of teacher embeddings used as extra negatives.
///
/// Stored rows are plain values with no gradient history. Once full, each
/// push evicts the oldest rows first so the fill stays at capacity.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t dim);

  /// Appends the rows of `batch` ([n, dim]) in order. Throws ShapeError when
  /// the row length differs from dim or n exceeds the capacity.
  void push(const Tensor& batch);
  void clear();

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t fill() const { return fill_; }
  bool empty() const { return fill_ == 0; }

  /// i-th stored row counted from the oldest.
  std::span<const double> row(std::size_t i) const;
  /// All stored rows, oldest first, as a [fill, dim] tensor. Requires fill > 0.
  Tensor contents() const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t head_ = 0;  // slot of the oldest row
  std::size_t fill_ = 0;
  std::vector<double> slots_;
};

}  // namespace disco
