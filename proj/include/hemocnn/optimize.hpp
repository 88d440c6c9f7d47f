#pragma once

#include <map>
#include <string>
#include <vector>

#include "hemocnn/layers.hpp"
#include "hemocnn/tensor.hpp"

namespace hemocnn {

template <typename T>
struct LossResult {
  T value = T{};
  Tensor<T> grad;  // d(value)/d(predictions), same shape as predictions
};

// Mean binary cross-entropy over every output unit: each column is treated
// as an independent Bernoulli probability (the two sigmoid outputs are not
// a softmax pair). Predictions are clamped to [1e-7, 1-1e-7] before the log
// and the gradient is taken at the clamped value.
//
// predictions: [batch, k] with entries in (0,1); targets: [batch, k] one-hot.
template <typename T>
LossResult<T> bce_loss(const Tensor<T>& predictions, const Tensor<T>& targets);

// Fraction of rows whose prediction argmax matches the target argmax.
// Ties break to the lower index on both sides.
template <typename T>
double accuracy(const Tensor<T>& predictions, const Tensor<T>& targets);

struct RmsPropConfig {
  double learning_rate = 0.001;
  double rho = 0.9;
  double epsilon = 1e-7;

  // learning_rate may be zero (update becomes the identity), rho must lie
  // in (0,1), epsilon must be positive
  void validate() const;
};

// One RMSProp update on a single tensor:
//   v <- rho*v + (1-rho)*g^2
//   param <- param - lr * g / (sqrt(v) + eps)   (epsilon outside the root)
template <typename T>
void rmsprop_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& v,
                    const RmsPropConfig& config);

// Optimizer holding one accumulator per parameter name. Single-writer:
// owned and driven by one training loop.
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(RmsPropConfig config = {}) : config_(config) {
    config_.validate();
  }

  const RmsPropConfig& config() const { return config_; }

  // Updates every parameter in place from its gradient. Accumulators are
  // created zero-filled the first time a name appears.
  void step(const std::vector<ParamRef<T>>& params);

 private:
  RmsPropConfig config_;
  std::map<std::string, Tensor<T>> state_;
};

}  // namespace hemocnn
