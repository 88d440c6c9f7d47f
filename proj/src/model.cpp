#include "hemocnn/model.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "hemocnn/errors.hpp"

namespace hemocnn {

template <typename T>
SequentialModel<T>::SequentialModel(Shape input_shape, std::uint64_t seed)
    : input_shape_(std::move(input_shape)),
      seed_(seed),
      init_rng_(derive_seed(seed, 0)),
      runtime_rng_(derive_seed(seed, 1)) {
  if (input_shape_.rank() == 0) {
    throw ShapeError("model: input shape must not be empty");
  }
}

template <typename T>
std::string SequentialModel<T>::next_name(const Layer<T>& layer) {
  std::size_t count = 1;
  for (const auto& l : layers_) {
    if (l->name_prefix() == layer.name_prefix()) ++count;
  }
  return std::string(layer.name_prefix()) + "_" + std::to_string(count);
}

template <typename T>
void SequentialModel<T>::add(std::unique_ptr<Layer<T>> layer) {
  const Shape& in =
      output_shapes_.empty() ? input_shape_ : output_shapes_.back();
  layer->set_name(next_name(*layer));
  layer->build(in, init_rng_);
  output_shapes_.push_back(layer->output_shape(in));
  layers_.push_back(std::move(layer));
}

template <typename T>
const Shape& SequentialModel<T>::output_shape() const {
  if (output_shapes_.empty()) {
    throw StateError("model: no layers added");
  }
  return output_shapes_.back();
}

template <typename T>
Tensor<T> SequentialModel<T>::forward(const Tensor<T>& batch, TrainMode mode) {
  if (layers_.empty()) throw StateError("model: no layers added");
  Tensor<T> x = batch;
  for (auto& layer : layers_) {
    x = layer->forward(x, mode, runtime_rng_);
  }
  return x;
}

template <typename T>
Tensor<T> SequentialModel<T>::backward(const Tensor<T>& grad) {
  if (layers_.empty()) throw StateError("model: no layers added");
  Tensor<T> g = grad;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = (*it)->backward(g);
  }
  return g;
}

template <typename T>
Tensor<T> SequentialModel<T>::predict(const Tensor<T>& batch) {
  return forward(batch, TrainMode::inference);
}

template <typename T>
std::vector<ParamRef<T>> SequentialModel<T>::params() {
  std::vector<ParamRef<T>> out;
  for (auto& layer : layers_) {
    for (auto& p : layer->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::size_t SequentialModel<T>::total_params() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) total += layer->param_count();
  return total;
}

template <typename T>
void SequentialModel<T>::zero_grads() {
  for (auto& layer : layers_) layer->zero_grads();
}

template <typename T>
void SequentialModel<T>::reseed_runtime(std::uint64_t seed) {
  runtime_rng_.reseed(seed);
}

template <typename T>
std::vector<LayerConfig> SequentialModel<T>::layer_configs() const {
  std::vector<LayerConfig> out;
  out.reserve(layers_.size());
  for (const auto& layer : layers_) out.push_back(layer->config());
  return out;
}

namespace {

std::string batched_shape_str(const Shape& s) {
  std::string out = "(None";
  for (std::size_t i = 0; i < s.rank(); ++i) {
    out += ", " + std::to_string(s[i]);
  }
  out += ")";
  return out;
}

}  // namespace

template <typename T>
std::string SequentialModel<T>::summary() const {
  constexpr std::size_t kNameCol = 33;
  constexpr std::size_t kShapeCol = 27;
  const std::string rule(kNameCol + kShapeCol + 8, '=');

  auto pad = [](std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
  };

  std::ostringstream out;
  out << pad("Layer (type)", kNameCol) << pad("Output Shape", kShapeCol)
      << "Param #\n";
  out << rule << "\n";
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = *layers_[i];
    out << pad(layer.name() + " (" + std::string(layer.type_label()) + ")",
               kNameCol)
        << pad(batched_shape_str(output_shapes_[i]), kShapeCol)
        << layer.param_count() << "\n";
  }
  out << rule << "\n";
  out << "Total params: " << total_params() << "\n";
  return out.str();
}

template <typename T>
SequentialModel<T> build_bloodcell_model(Shape input_shape, std::uint64_t seed) {
  SequentialModel<T> m(std::move(input_shape), seed);
  m.add(std::make_unique<Rescale<T>>());
  for (int block = 0; block < 3; ++block) {
    m.add(std::make_unique<Conv2D<T>>(32));
    m.add(std::make_unique<ReLU<T>>());
    m.add(std::make_unique<MaxPool2D<T>>());
  }
  m.add(std::make_unique<Conv2D<T>>(64));
  m.add(std::make_unique<ReLU<T>>());
  m.add(std::make_unique<MaxPool2D<T>>());
  m.add(std::make_unique<Flatten<T>>());
  m.add(std::make_unique<Dense<T>>(64));
  m.add(std::make_unique<ReLU<T>>());
  m.add(std::make_unique<Dropout<T>>(0.5));
  m.add(std::make_unique<Dense<T>>(2));
  m.add(std::make_unique<Sigmoid<T>>());
  return m;
}

template <typename T>
SequentialModel<T> build_compact_model(Shape input_shape, std::uint64_t seed) {
  SequentialModel<T> m(std::move(input_shape), seed);
  m.add(std::make_unique<Rescale<T>>());
  m.add(std::make_unique<Conv2D<T>>(4));
  m.add(std::make_unique<ReLU<T>>());
  m.add(std::make_unique<MaxPool2D<T>>());
  m.add(std::make_unique<Conv2D<T>>(8));
  m.add(std::make_unique<ReLU<T>>());
  m.add(std::make_unique<MaxPool2D<T>>());
  m.add(std::make_unique<Flatten<T>>());
  m.add(std::make_unique<Dense<T>>(16));
  m.add(std::make_unique<ReLU<T>>());
  m.add(std::make_unique<Dropout<T>>(0.5));
  m.add(std::make_unique<Dense<T>>(2));
  m.add(std::make_unique<Sigmoid<T>>());
  return m;
}

#define HEMOCNN_INSTANTIATE(T)                                             \
  template class SequentialModel<T>;                                       \
  template SequentialModel<T> build_bloodcell_model<T>(Shape, std::uint64_t); \
  template SequentialModel<T> build_compact_model<T>(Shape, std::uint64_t);

HEMOCNN_INSTANTIATE(float)
HEMOCNN_INSTANTIATE(double)

#undef HEMOCNN_INSTANTIATE

}  // namespace hemocnn
