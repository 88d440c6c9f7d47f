#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "hemocnn/errors.hpp"

namespace hemocnn {

// Dimension list of a dense row-major array, validated once at construction:
// every dim >= 1. Spatial tensors are (height, width, channels); a batch
// dimension is prepended at runtime where needed.
class Shape {
public:
  Shape() = default;  // rank-0 placeholder with zero elements
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t element_count() const;
  std::string str() const;  // "[120,160,3]"

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return dims_ != other.dims_; }

private:
  void validate() const;

  std::vector<std::size_t> dims_;
};

// Prepends a batch dimension: [h,w,c] -> [n,h,w,c].
Shape batched(std::size_t n, const Shape& per_sample);

// Dense row-major tensor of floating-point values. float is the training
// precision; double is used by the finite-difference verification path.
// Tensors are plain values: copyable, movable, no aliasing.
template <typename T>
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  // Rank- and bounds-checked multi-index access. Convenient in tests and
  // cold paths; hot loops index flat data() directly.
  T at(std::initializer_list<std::size_t> idx) const { return data_[offset_of(idx)]; }
  T& at(std::initializer_list<std::size_t> idx) { return data_[offset_of(idx)]; }

  void fill(T value);
  bool all_finite() const;

  // Same elements, new dims; element counts must match.
  Tensor reshaped(Shape new_shape) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

private:
  std::size_t offset_of(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<T> data_;
};

// Elementwise arithmetic; shapes must match exactly (no broadcasting).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T, typename F>
Tensor<T> map_elementwise(const Tensor<T>& t, F&& f) {
  Tensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = f(t[i]);
  return out;
}

// Reductions remove the reduced axis; reducing a rank-1 tensor yields [1].
template <typename T> Tensor<T> reduce_sum(const Tensor<T>& t, std::size_t axis);
template <typename T> Tensor<T> reduce_max(const Tensor<T>& t, std::size_t axis);

// Plain left-to-right sum over the flat data, in index order.
template <typename T> T total_sum(const Tensor<T>& t);

// c[i,j] = sum_l a[i,l]*b[l,j]. Per element the sum always runs in ascending
// l order, so results are bitwise stable across worker counts and match a
// naive triple loop exactly.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// c[i,j] = sum_l a[l,i]*b[l,j]   (a transposed; used for weight gradients)
template <typename T> Tensor<T> matmul_at(const Tensor<T>& a, const Tensor<T>& b);
// c[i,j] = sum_l a[i,l]*b[j,l]   (b transposed; used for input gradients)
template <typename T> Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);

// Receptive-field rearrangement for valid-padding convolution. Input is one
// sample [h,w,c]; row r of the result holds the (kh,kw,c) window of output
// pixel r, both in row-major order, so convolution becomes a single matmul
// against the flattened kernels.
template <typename T>
Tensor<T> im2col(const Tensor<T>& input, std::size_t kh, std::size_t kw,
                 std::size_t stride);

}  // namespace hemocnn
