#include "fixtures.hpp"

#include <cmath>
#include <cstdio>

namespace fixtures {

using namespace hemocnn;

Tensor<float> class_image(std::size_t label, const Shape& shape, Rng& rng) {
  const std::size_t h = shape[0], w = shape[1], c = shape[2];
  Tensor<float> img(shape);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = std::floor(rng.uniform(0.0, 60.0));
  }
  const std::size_t row_begin = label == 0 ? 0 : h / 2;
  const std::size_t row_end = label == 0 ? h / 2 : h;
  for (std::size_t i = row_begin; i < row_end; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        img[(i * w + j) * c + ch] = std::floor(rng.uniform(200.0, 256.0));
      }
    }
  }
  return img;
}

LabeledDataset synthetic_dataset(std::size_t per_class, const Shape& shape,
                                 std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset out;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t label = 0; label < 2; ++label) {
      Sample s{class_image(label, shape, rng), label,
               "synthetic/" + std::to_string(label) + "/" + std::to_string(i)};
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

void write_ppm_tree(const std::filesystem::path& root, const char* split,
                    std::size_t per_folder, const Shape& shape,
                    std::uint64_t seed) {
  static const struct {
    const char* folder;
    std::size_t label;
  } kFolders[] = {{"EOSINOPHIL", 1},
                  {"LYMPHOCYTE", 0},
                  {"MONOCYTE", 0},
                  {"NEUTROPHIL", 1}};

  Rng rng(seed);
  for (const auto& [folder, label] : kFolders) {
    const std::filesystem::path dir = root / split / folder;
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < per_folder; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "img_%03zu.ppm", i);
      write_ppm_file(dir / name, class_image(label, shape, rng));
    }
  }
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hemocnn_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
