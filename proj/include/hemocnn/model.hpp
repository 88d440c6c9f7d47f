#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hemocnn/layers.hpp"
#include "hemocnn/rng.hpp"
#include "hemocnn/tensor.hpp"

namespace hemocnn {

// Ordered layer stack with a fixed per-sample input shape. Layers are built
// as they are added, so shape chaining errors surface at construction time.
// Weight initialization and runtime randomness (dropout) draw from two
// independent streams derived from one seed, which makes construction order
// the only thing that fixes the weights.
template <typename T>
class SequentialModel {
 public:
  SequentialModel(Shape input_shape, std::uint64_t seed);

  SequentialModel(SequentialModel&&) noexcept = default;
  SequentialModel& operator=(SequentialModel&&) noexcept = default;
  SequentialModel(const SequentialModel&) = delete;
  SequentialModel& operator=(const SequentialModel&) = delete;

  // Takes ownership, assigns the Keras-style running name (conv2d_1, ...)
  // and builds the layer against the current end-of-stack shape.
  void add(std::unique_ptr<Layer<T>> layer);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const;  // per-sample, after the last layer
  std::uint64_t seed() const { return seed_; }

  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor<T> forward(const Tensor<T>& batch, TrainMode mode);
  // Propagates d(loss)/d(output) back through the stack; returns
  // d(loss)/d(input). Parameter gradients accumulate into the layers.
  Tensor<T> backward(const Tensor<T>& grad);

  // Inference-mode forward; never touches the runtime rng.
  Tensor<T> predict(const Tensor<T>& batch);

  std::vector<ParamRef<T>> params();
  std::size_t total_params() const;
  void zero_grads();

  // Restarts the runtime stream (dropout masks). Weights are untouched.
  void reseed_runtime(std::uint64_t seed);

  std::vector<LayerConfig> layer_configs() const;
  std::string summary() const;

 private:
  std::string next_name(const Layer<T>& layer);

  Shape input_shape_;
  std::uint64_t seed_;
  Rng init_rng_;
  Rng runtime_rng_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Shape> output_shapes_;  // per-sample, parallel to layers_
};

// The full classification stack: rescale, three conv32+relu+pool blocks,
// conv64+relu+pool, flatten, dense64+relu, dropout 0.5, dense2, sigmoid.
// 201922 trainable parameters at the default [120,160,3] input.
template <typename T>
SequentialModel<T> build_bloodcell_model(Shape input_shape = Shape{120, 160, 3},
                                         std::uint64_t seed = 42);

// Same layer vocabulary at toy scale (two conv blocks, dense 16). Fits
// inputs as small as [12,16,3]; used for gradient checking where the full
// stack would be needlessly slow.
template <typename T>
SequentialModel<T> build_compact_model(Shape input_shape = Shape{12, 16, 3},
                                       std::uint64_t seed = 42);

}  // namespace hemocnn
