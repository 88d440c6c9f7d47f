#include "hemocnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hemocnn/errors.hpp"
#include "hemocnn/optimize.hpp"
#include "hemocnn/rng.hpp"

namespace hemocnn {

namespace {

LossResult<double> squared_error(const Tensor<double>& pred,
                                 const Tensor<double>& targets) {
  if (pred.shape() != targets.shape()) {
    throw ShapeError("squared_error: predictions " + pred.shape().str() +
                     " vs targets " + targets.shape().str());
  }
  const double inv = 1.0 / static_cast<double>(pred.size());
  LossResult<double> out;
  out.grad = Tensor<double>(pred.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - targets[i];
    total += d * d;
    out.grad[i] = 2.0 * d * inv;
  }
  out.value = total * inv;
  return out;
}

LossResult<double> eval_loss(SequentialModel<double>& model,
                             const Tensor<double>& input,
                             const Tensor<double>& targets,
                             const GradCheckOptions& options) {
  model.reseed_runtime(options.seed);
  Tensor<double> pred = model.forward(input, TrainMode::training);
  LossResult<double> loss = options.loss == GradCheckLoss::bce
                                ? bce_loss(pred, targets)
                                : squared_error(pred, targets);
  if (!std::isfinite(loss.value)) {
    throw NumericError("gradient check: non-finite loss");
  }
  return loss;
}

}  // namespace

GradCheckReport finite_difference_check(SequentialModel<double>& model,
                                        const Tensor<double>& input,
                                        const Tensor<double>& targets,
                                        const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0) || !std::isfinite(options.epsilon)) {
    throw NumericError("gradient check: epsilon must be finite and > 0");
  }

  // analytic gradients first; probes below reuse the same dropout masks
  // because every forward reseeds the runtime stream
  LossResult<double> base = eval_loss(model, input, targets, options);
  model.zero_grads();
  model.backward(base.grad);

  auto params = model.params();
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(*p.grad);

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<double>& value = *params[t].value;

    std::vector<std::size_t> probe(value.size());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (options.max_entries_per_tensor != 0 &&
        options.max_entries_per_tensor < probe.size()) {
      Rng rng(derive_seed(options.seed, t + 1));
      rng.shuffle(probe);
      probe.resize(options.max_entries_per_tensor);
    }

    GradCheckEntry entry{params[t].name, probe.size(), 0.0};
    for (const std::size_t i : probe) {
      const double saved = value[i];
      value[i] = saved + options.epsilon;
      const double up = eval_loss(model, input, targets, options).value;
      value[i] = saved - options.epsilon;
      const double down = eval_loss(model, input, targets, options).value;
      value[i] = saved;

      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = analytic[t][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-12});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace hemocnn
