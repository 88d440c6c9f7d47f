#pragma once

#include <cstdint>
#include <filesystem>

#include "hemocnn/data.hpp"
#include "hemocnn/rng.hpp"
#include "hemocnn/tensor.hpp"

namespace fixtures {

template <typename T>
hemocnn::Tensor<T> random_tensor(const hemocnn::Shape& shape, hemocnn::Rng& rng,
                                 double lo = -1.0, double hi = 1.0) {
  hemocnn::Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(rng.uniform(lo, hi));
  }
  return t;
}

// Synthetic two-class image, [h,w,3], integral pixel values in [0,255]:
// dim noise everywhere, plus a bright band in the top half for class 0 and
// the bottom half for class 1. Trivially separable from pixel sums, which
// is what the overfit and monotone-loss checks need.
hemocnn::Tensor<float> class_image(std::size_t label, const hemocnn::Shape& shape,
                                   hemocnn::Rng& rng);

hemocnn::LabeledDataset synthetic_dataset(std::size_t per_class,
                                          const hemocnn::Shape& shape,
                                          std::uint64_t seed);

// Creates <root>/<split>/<FOLDER>/*.ppm with per_class images in each of the
// four standard folders (so both folders of each class get exercised).
void write_ppm_tree(const std::filesystem::path& root, const char* split,
                    std::size_t per_folder, const hemocnn::Shape& shape,
                    std::uint64_t seed);

// Fresh scratch directory under the system temp dir; wiped if it exists.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace fixtures
