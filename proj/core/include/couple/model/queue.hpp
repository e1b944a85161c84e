#pragma once

#include <cstddef>
#include <vector>

#include "couple/numerics/tensor.hpp"

namespace couple::model {

// Fixed-capacity FIFO ring of detached d-vectors.
class NegativeQueue {
 public:
  NegativeQueue() = default;
  NegativeQueue(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return fill_; }
  bool empty() const { return fill_ == 0; }

  // Appends the rows of a [B, d] tensor; the oldest rows are evicted once the
  // capacity is exceeded.
  void push(const numerics::Tensor& rows);

  // Contents oldest first as [size, d]. Requires a non-empty queue.
  numerics::Tensor contents() const;

  // Rebuilds a queue holding `rows` (oldest first).
  static NegativeQueue restore(std::size_t capacity, std::size_t dim, const numerics::Tensor* rows);

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::size_t head_ = 0;  // slot of the oldest row
  std::size_t fill_ = 0;
  std::vector<double> ring_;
};

}  // namespace couple::model
