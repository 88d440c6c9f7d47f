#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hemocnn/tensor.hpp"

namespace hemocnn {

// Index 0 groups lymphocytes and monocytes, index 1 neutrophils and
// eosinophils. Sorted lexicographically, which fixes the class indices.
inline constexpr std::array<const char*, 2> kClassNames{"MONONUCLEAR",
                                                        "POLYNUCLEAR"};

// Binary PPM (P6, maxval 255) codec. Pixel (i,j) channel c lands at [i,j,c];
// values stay in [0,255], scaling belongs to the model's rescale layer.
Tensor<float> decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Tensor<float>& image);
Tensor<float> read_ppm_file(const std::filesystem::path& path);
void write_ppm_file(const std::filesystem::path& path,
                    const Tensor<float>& image);

// Bilinear resample with half-pixel-center sampling. Interpolation is in
// lerp form, so a constant image stays exactly constant and the identity
// scale copies exactly.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_h,
                              std::size_t out_w);

// Folder-name to binary-class table. Lookups are case-insensitive on the
// folder name; every folder seen during ingestion must resolve.
class ClassMapping {
 public:
  // LYMPHOCYTE, MONOCYTE -> 0; NEUTROPHIL, EOSINOPHIL -> 1
  static ClassMapping defaults();
  // JSON object {"FOLDER": "MONONUCLEAR"|"POLYNUCLEAR", ...}
  static ClassMapping from_json_file(const std::filesystem::path& path);

  std::size_t class_of(const std::string& folder) const;

 private:
  std::map<std::string, std::size_t> table_;  // uppercased folder -> class
};

struct Sample {
  Tensor<float> image;  // [h,w,3], values in [0,255]
  std::size_t label = 0;
  std::string path;
};

struct LabeledDataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::array<std::size_t, 2> class_counts() const;
};

// Walks <root>/<FOLDER>/*.ppm, decodes and resizes every image to
// target_shape ([h,w,3]) and labels it via the mapping. Files are ordered
// lexicographically by path; decoding runs in parallel and fails fast on
// the first bad file.
LabeledDataset load_dataset(const std::filesystem::path& root,
                            const ClassMapping& mapping,
                            const Shape& target_shape);

// Per-class proportional split after a seeded shuffle. Both halves keep the
// source ordering of the samples they receive; together they partition the
// input exactly.
std::pair<LabeledDataset, LabeledDataset> split_stratified(
    const LabeledDataset& d, double val_fraction, std::uint64_t seed);

// One epoch worth of minibatches. The sample order is reshuffled from
// (seed, epoch), so every epoch sees a different but reproducible order;
// the final batch may be smaller.
class BatchStream {
 public:
  BatchStream(const LabeledDataset& d, std::size_t batch_size,
              std::uint64_t seed, std::size_t epoch, bool shuffle = true);

  // Fills images [b,h,w,c] and one-hot targets [b,2]; false once exhausted.
  bool next(Tensor<float>& images, Tensor<float>& targets);
  std::size_t batch_count() const;

 private:
  const LabeledDataset* data_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
};

}  // namespace hemocnn
