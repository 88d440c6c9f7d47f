#include "hemocnn/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "hemocnn/errors.hpp"

namespace hemocnn {

namespace {

constexpr double kProbFloor = 1e-7;
constexpr double kProbCeil = 1.0 - 1e-7;

template <typename T>
void check_pair(const Tensor<T>& predictions, const Tensor<T>& targets,
                const char* op) {
  if (predictions.shape() != targets.shape()) {
    throw ShapeError(std::string(op) + ": predictions " +
                     predictions.shape().str() + " vs targets " +
                     targets.shape().str());
  }
  if (predictions.shape().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected [batch,outputs], got " +
                     predictions.shape().str());
  }
}

}  // namespace

template <typename T>
LossResult<T> bce_loss(const Tensor<T>& predictions, const Tensor<T>& targets) {
  check_pair(predictions, targets, "bce_loss");
  const std::size_t batch = predictions.shape()[0];
  const std::size_t outputs = predictions.shape()[1];

  for (std::size_t r = 0; r < batch; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < outputs; ++c) {
      const T t = targets[r * outputs + c];
      if (t == T(1)) {
        ++ones;
      } else if (t != T(0)) {
        throw DataError("bce_loss: target row " + std::to_string(r) +
                        " is not one-hot");
      }
    }
    if (ones != 1) {
      throw DataError("bce_loss: target row " + std::to_string(r) +
                      " is not one-hot");
    }
  }

  const double inv_count = 1.0 / static_cast<double>(batch * outputs);
  LossResult<T> result;
  result.grad = Tensor<T>(predictions.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(static_cast<double>(predictions[i]),
                                kProbFloor, kProbCeil);
    const double t = static_cast<double>(targets[i]);
    total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    result.grad[i] = static_cast<T>((p - t) / (p * (1.0 - p)) * inv_count);
  }
  result.value = static_cast<T>(total * inv_count);
  return result;
}

template <typename T>
double accuracy(const Tensor<T>& predictions, const Tensor<T>& targets) {
  check_pair(predictions, targets, "accuracy");
  const std::size_t batch = predictions.shape()[0];
  const std::size_t outputs = predictions.shape()[1];
  if (batch == 0) throw DataError("accuracy: empty batch");

  auto row_argmax = [outputs](const T* row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < outputs; ++c) {
      if (row[c] > row[best]) best = c;  // strict: ties keep the lower index
    }
    return best;
  };

  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    if (row_argmax(predictions.data() + r * outputs) ==
        row_argmax(targets.data() + r * outputs)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(batch);
}

void RmsPropConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("rmsprop: learning_rate must be finite and >= 0");
  }
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ConfigError("rmsprop: rho must be in (0,1)");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("rmsprop: epsilon must be finite and > 0");
  }
}

template <typename T>
void rmsprop_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& v,
                    const RmsPropConfig& config) {
  if (param.shape() != grad.shape() || param.shape() != v.shape()) {
    throw ShapeError("rmsprop: param " + param.shape().str() + ", grad " +
                     grad.shape().str() + ", state " + v.shape().str() +
                     " must share a shape");
  }
  const T lr = static_cast<T>(config.learning_rate);
  const T rho = static_cast<T>(config.rho);
  const T one_minus_rho = T(1) - rho;
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    v[i] = rho * v[i] + one_minus_rho * g * g;
    param[i] -= lr * g / (std::sqrt(v[i]) + eps);
  }
}

template <typename T>
void RmsProp<T>::step(const std::vector<ParamRef<T>>& params) {
  for (const auto& p : params) {
    auto [it, inserted] = state_.try_emplace(p.name, p.value->shape());
    if (!inserted && it->second.shape() != p.value->shape()) {
      throw StateError("rmsprop: parameter '" + p.name +
                       "' changed shape between steps");
    }
    rmsprop_update(*p.value, *p.grad, it->second, config_);
  }
}

#define HEMOCNN_INSTANTIATE(T)                                            \
  template struct LossResult<T>;                                          \
  template LossResult<T> bce_loss<T>(const Tensor<T>&, const Tensor<T>&); \
  template double accuracy<T>(const Tensor<T>&, const Tensor<T>&);        \
  template void rmsprop_update<T>(Tensor<T>&, const Tensor<T>&,           \
                                  Tensor<T>&, const RmsPropConfig&);      \
  template class RmsProp<T>;

HEMOCNN_INSTANTIATE(float)
HEMOCNN_INSTANTIATE(double)

#undef HEMOCNN_INSTANTIATE

}  // namespace hemocnn
