#include "disco/memory_bank.hpp"

#include <algorithm>
#include <string>

namespace disco {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0 || dim == 0) throw std::invalid_argument("memory bank capacity and dim must be positive");
  slots_.assign(capacity * dim, 0.0);
}

void MemoryBank::push(const Tensor& batch) {
  const std::size_t n = batch.rows();
  if (batch.cols() != dim_) {
    throw ShapeError("memory bank stores rows of length " + std::to_string(dim_) + ", got " +
                     shape_to_string(batch.shape()));
  }
  if (n > capacity_) {
    throw ShapeError("batch of " + std::to_string(n) + " rows exceeds memory bank capacity " +
                     std::to_string(capacity_));
  }
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t slot;
    if (fill_ < capacity_) {
      slot = (head_ + fill_) % capacity_;
      ++fill_;
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
    }
    const auto src = batch.row(r);
    std::copy(src.begin(), src.end(), slots_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
  }
}

void MemoryBank::clear() {
  head_ = 0;
  fill_ = 0;
}

std::span<const double> MemoryBank::row(std::size_t i) const {
  if (i >= fill_) throw std::out_of_range("memory bank row " + std::to_string(i) + " beyond fill " + std::to_string(fill_));
  return std::span<const double>(slots_).subspan(((head_ + i) % capacity_) * dim_, dim_);
}

Tensor MemoryBank::contents() const {
  if (fill_ == 0) throw std::logic_error("memory bank is empty");
  Tensor out({fill_, dim_});
  for (std::size_t i = 0; i < fill_; ++i) {
    const auto src = row(i);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace disco
