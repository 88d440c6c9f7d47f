#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hemocnn/model.hpp"
#include "hemocnn/tensor.hpp"

namespace hemocnn {

// Loss to probe with. bce matches training; squared_error (mean of (p-t)^2)
// is quadratic, so on a purely linear stack central differences are exact up
// to roundoff, which pins the harness itself.
enum class GradCheckLoss { bce, squared_error };

struct GradCheckOptions {
  double epsilon = 1e-5;
  GradCheckLoss loss = GradCheckLoss::bce;
  // entries probed per parameter tensor; 0 probes every entry
  std::size_t max_entries_per_tensor = 0;
  // reseeds the model's runtime stream before every forward so dropout draws
  // the same mask for each probe; also drives entry sampling
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string name;  // parameter tensor, e.g. "conv2d_1/W"
  std::size_t checked = 0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;

  bool within(double tolerance) const { return max_rel_err < tolerance; }
};

// Central-difference check of every parameter gradient: perturbs entries by
// +/-epsilon, compares (L(t+e)-L(t-e))/2e against the analytic gradient with
// relative error |a-n|/max(|a|,|n|,1e-12). Runs in training mode with frozen
// dropout masks. Double precision only; float roundoff would drown the
// comparison.
GradCheckReport finite_difference_check(SequentialModel<double>& model,
                                        const Tensor<double>& input,
                                        const Tensor<double>& targets,
                                        const GradCheckOptions& options = {});

}  // namespace hemocnn
