#include "hemocnn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "hemocnn/parallel.hpp"

namespace hemocnn {

double LayerConfig::arg(const std::string& key) const {
  for (const auto& [k, v] : args) {
    if (k == key) return v;
  }
  throw FormatError("layer config '" + kind + "' is missing argument '" + key + "'");
}

bool LayerConfig::has(const std::string& key) const {
  for (const auto& [k, v] : args) {
    if (k == key) return true;
  }
  return false;
}

template <typename T>
void Layer<T>::build(const Shape& input, Rng& /*rng*/) {
  output_shape(input);  // validates
  input_shape_ = input;
}

template <typename T>
void Layer<T>::zero_grads() {
  for (auto& p : params()) p.grad->fill(T{});
}

template <typename T>
std::size_t Layer<T>::batch_size_of(const Tensor<T>& x) const {
  const Shape& s = x.shape();
  bool ok = s.rank() == input_shape_.rank() + 1;
  if (ok) {
    for (std::size_t i = 0; i < input_shape_.rank(); ++i) {
      if (s[i + 1] != input_shape_[i]) ok = false;
    }
  }
  if (!ok) {
    throw ShapeError(std::string(kind()) + ": expected batch of " +
                     input_shape_.str() + ", got " + s.str());
  }
  return s[0];
}

template <typename T>
void Layer<T>::require_cache(bool have) const {
  if (!have) {
    throw StateError(std::string(kind()) +
                     ": backward called without a preceding forward");
  }
}

namespace {

// Glorot-uniform: limit = sqrt(6/(fan_in+fan_out)). Draws happen in double
// and in flat index order, so a seed fixes the weights exactly.
template <typename T>
void glorot_fill(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<T>(rng.uniform(-limit, limit));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Rescale

template <typename T>
Tensor<T> Rescale<T>::forward(const Tensor<T>& x, TrainMode, Rng&) {
  this->batch_size_of(x);
  has_cache_ = true;
  // division keeps representable results exact (127.5/255 == 0.5)
  return map_elementwise(x, [](T v) { return v / T(255); });
}

template <typename T>
Tensor<T> Rescale<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  has_cache_ = false;
  return map_elementwise(grad, [](T v) { return v / T(255); });
}

// ---------------------------------------------------------------------------
// Conv2D

template <typename T>
Conv2D<T>::Conv2D(std::size_t filters, std::size_t kernel_h, std::size_t kernel_w)
    : filters_(filters), kernel_h_(kernel_h), kernel_w_(kernel_w) {
  if (filters_ == 0 || kernel_h_ == 0 || kernel_w_ == 0) {
    throw ConfigError("conv2d: filters and kernel dims must be positive");
  }
}

template <typename T>
Shape Conv2D<T>::output_shape(const Shape& input) const {
  if (input.rank() != 3) {
    throw ShapeError("conv2d: expected [h,w,c] input, got " + input.str());
  }
  if (input[0] < kernel_h_ || input[1] < kernel_w_) {
    throw ShapeError("conv2d: input " + input.str() + " smaller than " +
                     std::to_string(kernel_h_) + "x" + std::to_string(kernel_w_) +
                     " kernel");
  }
  if (in_channels_ != 0 && input[2] != in_channels_) {
    throw ShapeError("conv2d: expected " + std::to_string(in_channels_) +
                     " input channels, got " + input.str());
  }
  return Shape{input[0] - kernel_h_ + 1, input[1] - kernel_w_ + 1, filters_};
}

template <typename T>
void Conv2D<T>::build(const Shape& input, Rng& rng) {
  output_shape(input);
  this->input_shape_ = input;
  in_channels_ = input[2];
  weights_ = Tensor<T>(Shape{kernel_h_, kernel_w_, in_channels_, filters_});
  bias_ = Tensor<T>(Shape{filters_});
  grad_weights_ = Tensor<T>(weights_.shape());
  grad_bias_ = Tensor<T>(bias_.shape());
  const std::size_t window = kernel_h_ * kernel_w_;
  glorot_fill(weights_, window * in_channels_, window * filters_, rng);
}

namespace {

// Stacks per-sample im2col matrices into [n*out_h*out_w, kh*kw*c].
template <typename T>
Tensor<T> im2col_batch(const Tensor<T>& x, std::size_t kh, std::size_t kw,
                       std::size_t stride) {
  const Shape& s = x.shape();
  const std::size_t n = s[0], h = s[1], w = s[2], c = s[3];
  const std::size_t out_h = (h - kh) / stride + 1;
  const std::size_t out_w = (w - kw) / stride + 1;
  const std::size_t row_len = kh * kw * c;
  const std::size_t rows_per_sample = out_h * out_w;

  Tensor<T> cols(Shape{n * rows_per_sample, row_len});
  const std::size_t sample_elems = h * w * c;
  parallel_for(n, 1, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t si = s0; si < s1; ++si) {
      Tensor<T> sample(Shape{h, w, c},
                       std::vector<T>(x.data() + si * sample_elems,
                                      x.data() + (si + 1) * sample_elems));
      Tensor<T> one = im2col(sample, kh, kw, stride);
      std::copy(one.data(), one.data() + one.size(),
                cols.data() + si * rows_per_sample * row_len);
    }
  });
  return cols;
}

}  // namespace

template <typename T>
Tensor<T> Conv2D<T>::forward(const Tensor<T>& x, TrainMode, Rng&) {
  const std::size_t n = this->batch_size_of(x);
  const Shape out = output_shape(this->input_shape_);
  const std::size_t out_h = out[0], out_w = out[1];

  Tensor<T> cols = im2col_batch(x, kernel_h_, kernel_w_, 1);
  Tensor<T> w_mat = weights_.reshaped(
      Shape{kernel_h_ * kernel_w_ * in_channels_, filters_});
  Tensor<T> y = matmul(cols, w_mat);  // [n*out_h*out_w, filters]

  T* yd = y.data();
  const std::size_t rows = n * out_h * out_w;
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = yd + r * filters_;
    for (std::size_t o = 0; o < filters_; ++o) row[o] += bias_[o];
  }

  cached_input_ = x;
  has_cache_ = true;
  return y.reshaped(Shape{n, out_h, out_w, filters_});
}

template <typename T>
Tensor<T> Conv2D<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  const Shape& in = cached_input_.shape();
  const std::size_t n = in[0], h = in[1], w = in[2], c = in[3];
  const std::size_t out_h = h - kernel_h_ + 1;
  const std::size_t out_w = w - kernel_w_ + 1;
  if (grad.shape() != Shape{n, out_h, out_w, filters_}) {
    throw ShapeError("conv2d: upstream gradient " + grad.shape().str() +
                     " does not match forward output");
  }
  const std::size_t rows = n * out_h * out_w;
  const std::size_t row_len = kernel_h_ * kernel_w_ * c;
  Tensor<T> g_mat = grad.reshaped(Shape{rows, filters_});

  // dW = cols^T . g  (accumulated), db = column sums of g
  Tensor<T> cols = im2col_batch(cached_input_, kernel_h_, kernel_w_, 1);
  Tensor<T> dw = matmul_at(cols, g_mat);
  for (std::size_t i = 0; i < dw.size(); ++i) grad_weights_[i] += dw[i];
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = g_mat.data() + r * filters_;
    for (std::size_t o = 0; o < filters_; ++o) grad_bias_[o] += row[o];
  }

  // dX: scatter g . W^T back through the im2col windows
  Tensor<T> dcols = matmul_bt(g_mat, weights_.reshaped(Shape{row_len, filters_}));
  Tensor<T> dx(in);
  const std::size_t sample_elems = h * w * c;
  const std::size_t kh = kernel_h_, kw = kernel_w_;
  parallel_for(n, 1, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t si = s0; si < s1; ++si) {
      T* dxs = dx.data() + si * sample_elems;
      for (std::size_t i = 0; i < out_h; ++i) {
        for (std::size_t j = 0; j < out_w; ++j) {
          const T* row =
              dcols.data() + ((si * out_h + i) * out_w + j) * row_len;
          for (std::size_t di = 0; di < kh; ++di) {
            T* line = dxs + ((i + di) * w + j) * c;
            const T* seg = row + di * kw * c;
            for (std::size_t t = 0; t < kw * c; ++t) line[t] += seg[t];
          }
        }
      }
    }
  });

  cached_input_ = Tensor<T>();
  has_cache_ = false;
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> Conv2D<T>::params() {
  return {{this->name() + "/W", &weights_, &grad_weights_},
          {this->name() + "/b", &bias_, &grad_bias_}};
}

template <typename T>
std::size_t Conv2D<T>::param_count() const {
  return kernel_h_ * kernel_w_ * in_channels_ * filters_ + filters_;
}

template <typename T>
LayerConfig Conv2D<T>::config() const {
  return {"conv2d",
          {{"filters", static_cast<double>(filters_)},
           {"kernel_h", static_cast<double>(kernel_h_)},
           {"kernel_w", static_cast<double>(kernel_w_)}}};
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, TrainMode, Rng&) {
  this->batch_size_of(x);
  cached_input_ = x;
  has_cache_ = true;
  return map_elementwise(x, [](T v) { return v > T(0) ? v : T(0); });
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  if (grad.shape() != cached_input_.shape()) {
    throw ShapeError("relu: upstream gradient " + grad.shape().str() +
                     " does not match forward input");
  }
  Tensor<T> out(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    out[i] = cached_input_[i] > T(0) ? grad[i] : T(0);
  }
  cached_input_ = Tensor<T>();
  has_cache_ = false;
  return out;
}

// ---------------------------------------------------------------------------
// MaxPool2D

template <typename T>
MaxPool2D<T>::MaxPool2D(std::size_t pool_h, std::size_t pool_w, std::size_t stride)
    : pool_h_(pool_h), pool_w_(pool_w), stride_(stride) {
  if (pool_h_ == 0 || pool_w_ == 0 || stride_ == 0) {
    throw ConfigError("maxpool2d: pool dims and stride must be positive");
  }
}

template <typename T>
Shape MaxPool2D<T>::output_shape(const Shape& input) const {
  if (input.rank() != 3) {
    throw ShapeError("maxpool2d: expected [h,w,c] input, got " + input.str());
  }
  if (input[0] < pool_h_ || input[1] < pool_w_) {
    throw ShapeError("maxpool2d: input " + input.str() + " smaller than pool " +
                     std::to_string(pool_h_) + "x" + std::to_string(pool_w_));
  }
  return Shape{(input[0] - pool_h_) / stride_ + 1,
               (input[1] - pool_w_) / stride_ + 1, input[2]};
}

template <typename T>
Tensor<T> MaxPool2D<T>::forward(const Tensor<T>& x, TrainMode, Rng&) {
  const std::size_t n = this->batch_size_of(x);
  const std::size_t h = this->input_shape_[0], w = this->input_shape_[1],
                    c = this->input_shape_[2];
  const Shape out = output_shape(this->input_shape_);
  const std::size_t out_h = out[0], out_w = out[1];

  Tensor<T> y(Shape{n, out_h, out_w, c});
  argmax_.assign(y.size(), 0);
  const T* xd = x.data();
  T* yd = y.data();
  for (std::size_t si = 0; si < n; ++si) {
    const std::size_t x_base = si * h * w * c;
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = x_base + ((i * stride_) * w + j * stride_) * c + ch;
          T best_v = xd[best];
          for (std::size_t di = 0; di < pool_h_; ++di) {
            for (std::size_t dj = 0; dj < pool_w_; ++dj) {
              const std::size_t idx =
                  x_base + ((i * stride_ + di) * w + (j * stride_ + dj)) * c + ch;
              if (xd[idx] > best_v) {  // strict: first occurrence wins ties
                best_v = xd[idx];
                best = idx;
              }
            }
          }
          const std::size_t out_idx = ((si * out_h + i) * out_w + j) * c + ch;
          yd[out_idx] = best_v;
          argmax_[out_idx] = best;
        }
      }
    }
  }
  cached_batch_shape_ = x.shape();
  has_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> MaxPool2D<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  if (grad.size() != argmax_.size()) {
    throw ShapeError("maxpool2d: upstream gradient " + grad.shape().str() +
                     " does not match forward output");
  }
  // route each upstream value to its window's argmax; dropped odd rows and
  // columns never appear in argmax_ and stay zero
  Tensor<T> dx(cached_batch_shape_);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    dx[argmax_[i]] += grad[i];
  }
  argmax_.clear();
  has_cache_ = false;
  return dx;
}

template <typename T>
LayerConfig MaxPool2D<T>::config() const {
  return {"maxpool2d",
          {{"pool_h", static_cast<double>(pool_h_)},
           {"pool_w", static_cast<double>(pool_w_)},
           {"stride", static_cast<double>(stride_)}}};
}

// ---------------------------------------------------------------------------
// Flatten

template <typename T>
Shape Flatten<T>::output_shape(const Shape& input) const {
  return Shape{input.element_count()};
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x, TrainMode, Rng&) {
  const std::size_t n = this->batch_size_of(x);
  cached_batch_shape_ = x.shape();
  has_cache_ = true;
  return x.reshaped(Shape{n, this->input_shape_.element_count()});
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  if (grad.size() != cached_batch_shape_.element_count()) {
    throw ShapeError("flatten: upstream gradient " + grad.shape().str() +
                     " does not match forward input");
  }
  has_cache_ = false;
  return grad.reshaped(cached_batch_shape_);
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Dense<T>::Dense(std::size_t units) : units_(units) {
  if (units_ == 0) throw ConfigError("dense: units must be positive");
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& input) const {
  if (input.rank() != 1) {
    throw ShapeError("dense: expected flat [features] input, got " + input.str());
  }
  if (in_features_ != 0 && input[0] != in_features_) {
    throw ShapeError("dense: expected " + std::to_string(in_features_) +
                     " features, got " + input.str());
  }
  return Shape{units_};
}

template <typename T>
void Dense<T>::build(const Shape& input, Rng& rng) {
  output_shape(input);
  this->input_shape_ = input;
  in_features_ = input[0];
  weights_ = Tensor<T>(Shape{in_features_, units_});
  bias_ = Tensor<T>(Shape{units_});
  grad_weights_ = Tensor<T>(weights_.shape());
  grad_bias_ = Tensor<T>(bias_.shape());
  glorot_fill(weights_, in_features_, units_, rng);
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, TrainMode, Rng&) {
  this->batch_size_of(x);
  Tensor<T> y = matmul(x, weights_);
  T* yd = y.data();
  const std::size_t n = x.shape()[0];
  for (std::size_t r = 0; r < n; ++r) {
    T* row = yd + r * units_;
    for (std::size_t o = 0; o < units_; ++o) row[o] += bias_[o];
  }
  cached_input_ = x;
  has_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  const std::size_t n = cached_input_.shape()[0];
  if (grad.shape() != Shape{n, units_}) {
    throw ShapeError("dense: upstream gradient " + grad.shape().str() +
                     " does not match forward output");
  }
  Tensor<T> dw = matmul_at(cached_input_, grad);
  for (std::size_t i = 0; i < dw.size(); ++i) grad_weights_[i] += dw[i];
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = grad.data() + r * units_;
    for (std::size_t o = 0; o < units_; ++o) grad_bias_[o] += row[o];
  }
  Tensor<T> dx = matmul_bt(grad, weights_);
  cached_input_ = Tensor<T>();
  has_cache_ = false;
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> Dense<T>::params() {
  return {{this->name() + "/W", &weights_, &grad_weights_},
          {this->name() + "/b", &bias_, &grad_bias_}};
}

template <typename T>
std::size_t Dense<T>::param_count() const {
  return in_features_ * units_ + units_;
}

template <typename T>
LayerConfig Dense<T>::config() const {
  return {"dense", {{"units", static_cast<double>(units_)}}};
}

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
Dropout<T>::Dropout(double ratio) : ratio_(ratio) {
  if (!(ratio_ >= 0.0 && ratio_ < 1.0)) {
    throw ConfigError("dropout: ratio must be in [0,1), got " +
                      std::to_string(ratio));
  }
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, TrainMode mode, Rng& rng) {
  this->batch_size_of(x);
  cached_mode_ = mode;
  has_cache_ = true;
  if (mode == TrainMode::inference || ratio_ == 0.0) {
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - ratio_));
  mask_ = Tensor<T>(x.shape());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.bernoulli(ratio_) ? T(0) : keep_scale;
    mask_[i] = m;
    y[i] = x[i] * m;
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  has_cache_ = false;
  if (cached_mode_ == TrainMode::inference || ratio_ == 0.0) {
    return grad;
  }
  Tensor<T> out = hadamard(grad, mask_);
  mask_ = Tensor<T>();
  return out;
}

template <typename T>
LayerConfig Dropout<T>::config() const {
  return {"dropout", {{"ratio", ratio_}}};
}

// ---------------------------------------------------------------------------
// Sigmoid

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, TrainMode, Rng&) {
  this->batch_size_of(x);
  // lowest representable output; keeps saturated tails inside (0,1)
  const T floor_v = std::numeric_limits<T>::min();
  const T ceil_v = T(1) - std::numeric_limits<T>::epsilon();
  Tensor<T> y = map_elementwise(x, [&](T v) {
    T s;
    if (v >= T(0)) {
      const T e = std::exp(-v);
      s = T(1) / (T(1) + e);
    } else {
      const T e = std::exp(v);
      s = e / (T(1) + e);
    }
    return std::min(std::max(s, floor_v), ceil_v);
  });
  cached_output_ = y;
  has_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad) {
  this->require_cache(has_cache_);
  if (grad.shape() != cached_output_.shape()) {
    throw ShapeError("sigmoid: upstream gradient " + grad.shape().str() +
                     " does not match forward output");
  }
  Tensor<T> out(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const T y = cached_output_[i];
    out[i] = grad[i] * y * (T(1) - y);
  }
  cached_output_ = Tensor<T>();
  has_cache_ = false;
  return out;
}

// ---------------------------------------------------------------------------
// factory

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerConfig& config) {
  const std::string& kind = config.kind;
  if (kind == "rescale") return std::make_unique<Rescale<T>>();
  if (kind == "conv2d") {
    return std::make_unique<Conv2D<T>>(
        static_cast<std::size_t>(config.arg("filters")),
        static_cast<std::size_t>(config.arg("kernel_h")),
        static_cast<std::size_t>(config.arg("kernel_w")));
  }
  if (kind == "relu") return std::make_unique<ReLU<T>>();
  if (kind == "maxpool2d") {
    return std::make_unique<MaxPool2D<T>>(
        static_cast<std::size_t>(config.arg("pool_h")),
        static_cast<std::size_t>(config.arg("pool_w")),
        static_cast<std::size_t>(config.arg("stride")));
  }
  if (kind == "flatten") return std::make_unique<Flatten<T>>();
  if (kind == "dense") {
    return std::make_unique<Dense<T>>(
        static_cast<std::size_t>(config.arg("units")));
  }
  if (kind == "dropout") return std::make_unique<Dropout<T>>(config.arg("ratio"));
  if (kind == "sigmoid") return std::make_unique<Sigmoid<T>>();
  throw FormatError("unknown layer kind '" + kind + "'");
}

#define HEMOCNN_INSTANTIATE(T)                                   \
  template class Layer<T>;                                       \
  template class Rescale<T>;                                     \
  template class Conv2D<T>;                                      \
  template class ReLU<T>;                                        \
  template class MaxPool2D<T>;                                   \
  template class Flatten<T>;                                     \
  template class Dense<T>;                                       \
  template class Dropout<T>;                                     \
  template class Sigmoid<T>;                                     \
  template std::unique_ptr<Layer<T>> make_layer<T>(const LayerConfig&);

HEMOCNN_INSTANTIATE(float)
HEMOCNN_INSTANTIATE(double)

#undef HEMOCNN_INSTANTIATE

}  // namespace hemocnn
