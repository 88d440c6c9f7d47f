#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hemocnn/rng.hpp"
#include "hemocnn/tensor.hpp"

namespace hemocnn {

enum class TrainMode { training, inference };

// Named view into a layer's parameter tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;  // "conv2d_1/W"
  Tensor<T>* value;
  Tensor<T>* grad;
};

// Serializable layer description: kind plus numeric arguments. Keeps the
// checkpoint format decoupled from the layer classes.
struct LayerConfig {
  std::string kind;
  std::vector<std::pair<std::string, double>> args;

  double arg(const std::string& key) const;
  bool has(const std::string& key) const;
};

// One differentiable stage of the network. Layers consume batched tensors
// ([n,h,w,c] spatial, [n,features] flat); output_shape/build work on the
// per-sample shape. backward may only run after forward on the same batch
// and consumes the cached activations.
template <typename T>
class Layer {
public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;         // "conv2d"
  virtual std::string_view type_label() const = 0;   // "Conv2D"
  virtual std::string_view name_prefix() const = 0;  // "conv2d"

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  // Per-sample output shape; throws ShapeError when the layer cannot accept
  // the given input.
  virtual Shape output_shape(const Shape& input) const = 0;

  // Binds the layer to its per-sample input shape and allocates parameters.
  // Called once, by the model, in layer order.
  virtual void build(const Shape& input, Rng& rng);

  virtual Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad) = 0;

  virtual std::vector<ParamRef<T>> params() { return {}; }
  virtual std::size_t param_count() const { return 0; }
  void zero_grads();

  virtual LayerConfig config() const { return {std::string(kind()), {}}; }

  const Shape& input_shape() const { return input_shape_; }

protected:
  // Validates that x is a batch of the bound per-sample shape and returns
  // the batch size.
  std::size_t batch_size_of(const Tensor<T>& x) const;
  void require_cache(bool have) const;

  Shape input_shape_;

private:
  std::string name_;
};

// y = x / 255; maps 8-bit pixel values into [0,1].
template <typename T>
class Rescale final : public Layer<T> {
public:
  std::string_view kind() const override { return "rescale"; }
  std::string_view type_label() const override { return "Lambda"; }
  std::string_view name_prefix() const override { return "lambda"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

private:
  bool has_cache_ = false;
};

// Valid-padding 2D convolution, stride 1, kernel kh x kw, channel-last.
// Weights are [kh,kw,c_in,filters]; forward runs as im2col + matmul.
template <typename T>
class Conv2D final : public Layer<T> {
public:
  Conv2D(std::size_t filters, std::size_t kernel_h = 3, std::size_t kernel_w = 3);

  std::string_view kind() const override { return "conv2d"; }
  std::string_view type_label() const override { return "Conv2D"; }
  std::string_view name_prefix() const override { return "conv2d"; }
  Shape output_shape(const Shape& input) const override;
  void build(const Shape& input, Rng& rng) override;
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  std::vector<ParamRef<T>> params() override;
  std::size_t param_count() const override;
  LayerConfig config() const override;

  std::size_t filters() const { return filters_; }

private:
  std::size_t filters_, kernel_h_, kernel_w_;
  std::size_t in_channels_ = 0;
  Tensor<T> weights_, bias_, grad_weights_, grad_bias_;
  Tensor<T> cached_input_;
  bool has_cache_ = false;
};

// y = max(x, 0); gradient at exactly 0 is 0.
template <typename T>
class ReLU final : public Layer<T> {
public:
  std::string_view kind() const override { return "relu"; }
  std::string_view type_label() const override { return "Activation"; }
  std::string_view name_prefix() const override { return "activation"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

private:
  Tensor<T> cached_input_;
  bool has_cache_ = false;
};

// 2x2 max pooling, stride 2, trailing odd row/column dropped. The argmax of
// each window is cached for backward; ties break to the first occurrence in
// row-major order.
template <typename T>
class MaxPool2D final : public Layer<T> {
public:
  MaxPool2D(std::size_t pool_h = 2, std::size_t pool_w = 2, std::size_t stride = 2);

  std::string_view kind() const override { return "maxpool2d"; }
  std::string_view type_label() const override { return "MaxPooling2D"; }
  std::string_view name_prefix() const override { return "max_pooling2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  LayerConfig config() const override;

private:
  std::size_t pool_h_, pool_w_, stride_;
  std::vector<std::size_t> argmax_;  // flat input index per output element
  Shape cached_batch_shape_;
  bool has_cache_ = false;
};

// [n,h,w,c] -> [n, h*w*c], row-major; backward restores the shape.
template <typename T>
class Flatten final : public Layer<T> {
public:
  std::string_view kind() const override { return "flatten"; }
  std::string_view type_label() const override { return "Flatten"; }
  std::string_view name_prefix() const override { return "flatten"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

private:
  Shape cached_batch_shape_;
  bool has_cache_ = false;
};

// Fully connected: y = x.W + b with W [in,units].
template <typename T>
class Dense final : public Layer<T> {
public:
  explicit Dense(std::size_t units);

  std::string_view kind() const override { return "dense"; }
  std::string_view type_label() const override { return "Dense"; }
  std::string_view name_prefix() const override { return "dense"; }
  Shape output_shape(const Shape& input) const override;
  void build(const Shape& input, Rng& rng) override;
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  std::vector<ParamRef<T>> params() override;
  std::size_t param_count() const override;
  LayerConfig config() const override;

  std::size_t units() const { return units_; }

private:
  std::size_t units_;
  std::size_t in_features_ = 0;
  Tensor<T> weights_, bias_, grad_weights_, grad_bias_;
  Tensor<T> cached_input_;
  bool has_cache_ = false;
};

// Inverted dropout: in training each element is zeroed with probability
// `ratio` and survivors are scaled by 1/(1-ratio); inference is the
// identity, bit for bit.
template <typename T>
class Dropout final : public Layer<T> {
public:
  explicit Dropout(double ratio);

  std::string_view kind() const override { return "dropout"; }
  std::string_view type_label() const override { return "Dropout"; }
  std::string_view name_prefix() const override { return "dropout"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;
  LayerConfig config() const override;

  double ratio() const { return ratio_; }

private:
  double ratio_;
  Tensor<T> mask_;  // 0 or 1/(1-ratio) per element
  TrainMode cached_mode_ = TrainMode::inference;
  bool has_cache_ = false;
};

// y = 1/(1+exp(-x)), numerically stable on both tails; output clamped into
// the open interval (0,1). backward: g * y * (1-y).
template <typename T>
class Sigmoid final : public Layer<T> {
public:
  std::string_view kind() const override { return "sigmoid"; }
  std::string_view type_label() const override { return "Activation"; }
  std::string_view name_prefix() const override { return "activation"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, TrainMode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad) override;

private:
  Tensor<T> cached_output_;
  bool has_cache_ = false;
};

// Reconstructs a layer from its serialized description.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerConfig& config);

}  // namespace hemocnn
