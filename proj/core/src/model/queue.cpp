#include "couple/model/queue.hpp"

#include <algorithm>
#include <string>

#include "couple/errors.hpp"

namespace couple::model {

using numerics::Tensor;

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), ring_(capacity * dim, 0.0) {
  if (capacity == 0 || dim == 0) throw ValidationError("negative queue needs positive capacity and dim");
}

void NegativeQueue::push(const Tensor& rows) {
  if (rows.last_dim() != dim_ || rows.rank() == 0) {
    throw ShapeError("negative queue holds " + std::to_string(dim_) + "-vectors, got " +
                     numerics::shape_string(rows.shape()));
  }
  const std::size_t n = rows.rows();
  for (std::size_t r = (n > capacity_ ? n - capacity_ : 0); r < n; ++r) {
    const std::size_t slot = (head_ + fill_) % capacity_;
    auto src = rows.row(r);
    std::copy(src.begin(), src.end(), ring_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
    if (fill_ < capacity_) {
      ++fill_;
    } else {
      head_ = (head_ + 1) % capacity_;
    }
  }
}

Tensor NegativeQueue::contents() const {
  if (fill_ == 0) throw ValidationError("negative queue is empty");
  Tensor out({fill_, dim_});
  for (std::size_t i = 0; i < fill_; ++i) {
    const std::size_t slot = (head_ + i) % capacity_;
    std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(slot * dim_), dim_, out.row(i).begin());
  }
  return out;
}

NegativeQueue NegativeQueue::restore(std::size_t capacity, std::size_t dim, const Tensor* rows) {
  NegativeQueue q(capacity, dim);
  if (rows) {
    if (rows->rows() > capacity) throw ValidationError("restored queue exceeds its capacity");
    q.push(*rows);
  }
  return q;
}

}  // namespace couple::model
