#include "hemocnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hemocnn/parallel.hpp"

namespace hemocnn {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : dims_(dims) {
  validate();
}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  validate();
}

void Shape::validate() const {
  if (dims_.empty()) {
    throw ShapeError("shape must have at least one dimension");
  }
  for (std::size_t d : dims_) {
    if (d == 0) {
      throw ShapeError("shape dimensions must be positive, got " + str());
    }
  }
}

std::size_t Shape::element_count() const {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

Shape batched(std::size_t n, const Shape& per_sample) {
  std::vector<std::size_t> dims;
  dims.reserve(per_sample.rank() + 1);
  dims.push_back(n);
  dims.insert(dims.end(), per_sample.dims().begin(), per_sample.dims().end());
  return Shape(std::move(dims));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_.element_count(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.element_count()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

template <typename T>
std::size_t Tensor<T>::offset_of(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.rank()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) +
                     " does not match tensor shape " + shape_.str());
  }
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= shape_[axis]) {
      throw ShapeError("index out of range on axis " + std::to_string(axis) +
                       " for shape " + shape_.str());
    }
    offset = offset * shape_[axis] + i;
    ++axis;
  }
  return offset;
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape new_shape) const {
  if (new_shape.element_count() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + new_shape.str());
  }
  return Tensor<T>(std::move(new_shape), data_);
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.shape().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                     t.shape().str());
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "hadamard");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& t, std::size_t axis) {
  const Shape& s = t.shape();
  if (axis >= s.rank()) {
    throw ShapeError("reduce_sum: axis " + std::to_string(axis) +
                     " out of range for " + s.str());
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];

  std::vector<std::size_t> out_dims;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    if (i != axis) out_dims.push_back(s[i]);
  }
  if (out_dims.empty()) out_dims.push_back(1);

  Tensor<T> out(Shape(std::move(out_dims)), T{});
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < extent; ++k) {
      const T* src = t.data() + (o * extent + k) * inner;
      T* dst = out.data() + o * inner;
      for (std::size_t in = 0; in < inner; ++in) dst[in] += src[in];
    }
  }
  return out;
}

template <typename T>
Tensor<T> reduce_max(const Tensor<T>& t, std::size_t axis) {
  const Shape& s = t.shape();
  if (axis >= s.rank()) {
    throw ShapeError("reduce_max: axis " + std::to_string(axis) +
                     " out of range for " + s.str());
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];

  std::vector<std::size_t> out_dims;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    if (i != axis) out_dims.push_back(s[i]);
  }
  if (out_dims.empty()) out_dims.push_back(1);

  Tensor<T> out(Shape(std::move(out_dims)));
  for (std::size_t o = 0; o < outer; ++o) {
    const T* first = t.data() + o * extent * inner;
    T* dst = out.data() + o * inner;
    for (std::size_t in = 0; in < inner; ++in) dst[in] = first[in];
    for (std::size_t k = 1; k < extent; ++k) {
      const T* src = first + k * inner;
      for (std::size_t in = 0; in < inner; ++in) {
        if (src[in] > dst[in]) dst[in] = src[in];
      }
    }
  }
  return out;
}

template <typename T>
T total_sum(const Tensor<T>& t) {
  T acc{};
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i];
  return acc;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t kb = b.shape()[0], n = b.shape()[1];
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions mismatch " + a.shape().str() +
                     " x " + b.shape().str());
  }
  Tensor<T> c(Shape{m, n});
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
  parallel_for(m, 16, [=](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      T* ci = cd + i * n;
      const T* ai = ad + i * k;
      for (std::size_t l = 0; l < k; ++l) {
        const T av = ai[l];
        const T* bl = bd + l * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
      }
    }
  });
  return c;
}

template <typename T>
Tensor<T> matmul_at(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_at");
  require_rank2(b, "matmul_at");
  const std::size_t k = a.shape()[0], m = a.shape()[1];
  const std::size_t kb = b.shape()[0], n = b.shape()[1];
  if (k != kb) {
    throw ShapeError("matmul_at: leading dimensions mismatch " +
                     a.shape().str() + " x " + b.shape().str());
  }
  // l-outer streaming keeps both inputs sequential; the small output stays
  // cache resident. Single-threaded so each c[i,j] accumulates in l order.
  Tensor<T> c(Shape{m, n});
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
  for (std::size_t l = 0; l < k; ++l) {
    const T* al = ad + l * m;
    const T* bl = bd + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = al[i];
      T* ci = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.shape()[0], kb = b.shape()[1];
  if (k != kb) {
    throw ShapeError("matmul_bt: trailing dimensions mismatch " +
                     a.shape().str() + " x " + b.shape().str());
  }
  Tensor<T> c(Shape{m, n});
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
  parallel_for(m, 16, [=](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const T* ai = ad + i * k;
      T* ci = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T* bj = bd + j * k;
        T acc{};
        for (std::size_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
        ci[j] = acc;
      }
    }
  });
  return c;
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& input, std::size_t kh, std::size_t kw,
                 std::size_t stride) {
  const Shape& s = input.shape();
  if (s.rank() != 3) {
    throw ShapeError("im2col: expected [h,w,c] input, got " + s.str());
  }
  if (kh == 0 || kw == 0 || stride == 0) {
    throw ShapeError("im2col: window and stride must be positive");
  }
  const std::size_t h = s[0], w = s[1], c = s[2];
  if (h < kh || w < kw) {
    throw ShapeError("im2col: window " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " larger than input " + s.str());
  }
  const std::size_t out_h = (h - kh) / stride + 1;
  const std::size_t out_w = (w - kw) / stride + 1;
  const std::size_t row_len = kh * kw * c;

  Tensor<T> cols(Shape{out_h * out_w, row_len});
  const T* src = input.data();
  T* dst = cols.data();
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      T* row = dst + (i * out_w + j) * row_len;
      for (std::size_t di = 0; di < kh; ++di) {
        const T* line = src + ((i * stride + di) * w + j * stride) * c;
        std::copy(line, line + kw * c, row + di * kw * c);
      }
    }
  }
  return cols;
}

#define HEMOCNN_INSTANTIATE(T)                                              \
  template class Tensor<T>;                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> scale(const Tensor<T>&, T);                            \
  template Tensor<T> reduce_sum(const Tensor<T>&, std::size_t);             \
  template Tensor<T> reduce_max(const Tensor<T>&, std::size_t);             \
  template T total_sum(const Tensor<T>&);                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> matmul_at(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> matmul_bt(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> im2col(const Tensor<T>&, std::size_t, std::size_t,     \
                            std::size_t);

HEMOCNN_INSTANTIATE(float)
HEMOCNN_INSTANTIATE(double)

#undef HEMOCNN_INSTANTIATE

}  // namespace hemocnn
