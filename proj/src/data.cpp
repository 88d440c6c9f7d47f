#include "hemocnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "hemocnn/errors.hpp"
#include "hemocnn/parallel.hpp"
#include "hemocnn/rng.hpp"

namespace hemocnn {

namespace {

// Header tokens are separated by whitespace; '#' starts a comment running
// to end of line.
class PpmReader {
 public:
  explicit PpmReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::string token(const char* field) {
    skip_separators();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) {
      out += static_cast<char>(bytes_[pos_++]);
    }
    if (out.empty()) {
      throw FormatError(std::string("ppm: missing ") + field);
    }
    return out;
  }

  std::size_t number(const char* field) {
    const std::string t = token(field);
    std::size_t value = 0;
    for (char ch : t) {
      if (ch < '0' || ch > '9') {
        throw FormatError(std::string("ppm: ") + field + " is not a number: '" +
                          t + "'");
      }
      value = value * 10 + static_cast<std::size_t>(ch - '0');
    }
    return value;
  }

  // After maxval exactly one whitespace byte precedes the payload.
  const std::uint8_t* payload(std::size_t expected) {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("ppm: missing separator before pixel data");
    }
    ++pos_;
    if (bytes_.size() - pos_ < expected) {
      throw FormatError("ppm: truncated pixel data (" +
                        std::to_string(bytes_.size() - pos_) + " of " +
                        std::to_string(expected) + " bytes)");
    }
    return bytes_.data() + pos_;
  }

 private:
  void skip_separators() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor<float> decode_ppm(const std::vector<std::uint8_t>& bytes) {
  PpmReader reader(bytes);
  const std::string magic = reader.token("magic");
  if (magic != "P6") {
    throw FormatError("ppm: unsupported magic '" + magic + "', want P6");
  }
  const std::size_t width = reader.number("width");
  const std::size_t height = reader.number("height");
  if (width == 0 || height == 0) {
    throw FormatError("ppm: zero width or height");
  }
  const std::size_t maxval = reader.number("maxval");
  if (maxval != 255) {
    throw FormatError("ppm: unsupported maxval " + std::to_string(maxval) +
                      ", want 255");
  }
  const std::size_t count = height * width * 3;
  const std::uint8_t* pixels = reader.payload(count);

  Tensor<float> img(Shape{height, width, 3});
  for (std::size_t i = 0; i < count; ++i) {
    img[i] = static_cast<float>(pixels[i]);
  }
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Tensor<float>& image) {
  const Shape& s = image.shape();
  if (s.rank() != 3 || s[2] != 3) {
    throw ShapeError("ppm: expected [h,w,3] image, got " + s.str());
  }
  const std::string header = "P6\n" + std::to_string(s[1]) + " " +
                             std::to_string(s[0]) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const long v = std::lround(image[i]);
    out.push_back(static_cast<std::uint8_t>(std::clamp(v, 0L, 255L)));
  }
  return out;
}

Tensor<float> read_ppm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ppm_file(const std::filesystem::path& path,
                    const Tensor<float>& image) {
  const std::vector<std::uint8_t> bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("short write to " + path.string());
  }
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_h,
                              std::size_t out_w) {
  const Shape& s = image.shape();
  if (s.rank() != 3) {
    throw ShapeError("resize: expected [h,w,c] image, got " + s.str());
  }
  if (out_h == 0 || out_w == 0) {
    throw ConfigError("resize: target dimensions must be positive");
  }
  const std::size_t in_h = s[0], in_w = s[1], channels = s[2];
  if (in_h == out_h && in_w == out_w) {
    return image;
  }

  const double scale_h = static_cast<double>(in_h) / static_cast<double>(out_h);
  const double scale_w = static_cast<double>(in_w) / static_cast<double>(out_w);

  // source coordinate of an output pixel center, clamped to the image
  auto src_coord = [](std::size_t dst, double scale, std::size_t limit) {
    double c = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(limit - 1));
    const std::size_t lo = static_cast<std::size_t>(c);
    const std::size_t hi = std::min(lo + 1, limit - 1);
    return std::tuple{lo, hi, static_cast<float>(c - static_cast<double>(lo))};
  };

  Tensor<float> out(Shape{out_h, out_w, channels});
  const float* src = image.data();
  float* dst = out.data();
  for (std::size_t i = 0; i < out_h; ++i) {
    const auto [y0, y1, fy] = src_coord(i, scale_h, in_h);
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto [x0, x1, fx] = src_coord(j, scale_w, in_w);
      for (std::size_t c = 0; c < channels; ++c) {
        const float p00 = src[(y0 * in_w + x0) * channels + c];
        const float p01 = src[(y0 * in_w + x1) * channels + c];
        const float p10 = src[(y1 * in_w + x0) * channels + c];
        const float p11 = src[(y1 * in_w + x1) * channels + c];
        // lerp form: exact when the four corners agree
        const float top = p00 + fx * (p01 - p00);
        const float bottom = p10 + fx * (p11 - p10);
        dst[(i * out_w + j) * channels + c] = top + fy * (bottom - top);
      }
    }
  }
  return out;
}

namespace {

std::string upper(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::toupper(ch));
  return s;
}

std::size_t class_index(const std::string& class_name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (class_name == kClassNames[i]) return i;
  }
  throw ConfigError("class mapping: unknown class '" + class_name +
                    "', want MONONUCLEAR or POLYNUCLEAR");
}

}  // namespace

ClassMapping ClassMapping::defaults() {
  ClassMapping m;
  m.table_ = {{"LYMPHOCYTE", 0}, {"MONOCYTE", 0},
              {"NEUTROPHIL", 1}, {"EOSINOPHIL", 1}};
  return m;
}

ClassMapping ClassMapping::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open class mapping " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("class mapping " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || doc.empty()) {
    throw ConfigError("class mapping " + path.string() +
                      ": want a non-empty JSON object");
  }
  ClassMapping m;
  for (const auto& [folder, value] : doc.items()) {
    if (!value.is_string()) {
      throw ConfigError("class mapping: value for '" + folder +
                        "' must be a string");
    }
    m.table_[upper(folder)] = class_index(upper(value.get<std::string>()));
  }
  return m;
}

std::size_t ClassMapping::class_of(const std::string& folder) const {
  const auto it = table_.find(upper(folder));
  if (it == table_.end()) {
    throw ConfigError("no class mapping for folder '" + folder + "'");
  }
  return it->second;
}

std::array<std::size_t, 2> LabeledDataset::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& s : samples) counts.at(s.label) += 1;
  return counts;
}

LabeledDataset load_dataset(const std::filesystem::path& root,
                            const ClassMapping& mapping,
                            const Shape& target_shape) {
  if (target_shape.rank() != 3 || target_shape[2] != 3) {
    throw ConfigError("load_dataset: target shape must be [h,w,3], got " +
                      target_shape.str());
  }
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw DataError("dataset root " + root.string() + " is not a directory");
  }

  struct Entry {
    std::string path;
    std::size_t label;
  };
  std::vector<Entry> entries;
  for (const auto& dir : std::filesystem::directory_iterator(root)) {
    if (!dir.is_directory()) continue;
    const std::string folder = dir.path().filename().string();
    const std::size_t label = mapping.class_of(folder);
    for (const auto& file : std::filesystem::directory_iterator(dir.path())) {
      if (!file.is_regular_file()) continue;
      if (file.path().extension() != ".ppm") continue;
      entries.push_back({file.path().string(), label});
    }
  }
  if (entries.empty()) {
    throw DataError("no .ppm files under " + root.string());
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.path < b.path; });

  LabeledDataset out;
  out.samples.resize(entries.size());
  parallel_for(entries.size(), 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Tensor<float> img = read_ppm_file(entries[i].path);
      out.samples[i] = {resize_bilinear(img, target_shape[0], target_shape[1]),
                        entries[i].label, entries[i].path};
    }
  });
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_stratified(
    const LabeledDataset& d, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("split: validation fraction must be in [0,1), got " +
                      std::to_string(val_fraction));
  }
  std::vector<bool> in_val(d.size(), false);
  for (std::size_t cls = 0; cls < kClassNames.size(); ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.samples[i].label == cls) members.push_back(i);
    }
    Rng rng(derive_seed(seed, cls));
    rng.shuffle(members);
    const auto take = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < take; ++k) in_val[members[k]] = true;
  }

  LabeledDataset train, val;
  for (std::size_t i = 0; i < d.size(); ++i) {
    (in_val[i] ? val : train).samples.push_back(d.samples[i]);
  }
  return {std::move(train), std::move(val)};
}

BatchStream::BatchStream(const LabeledDataset& d, std::size_t batch_size,
                         std::uint64_t seed, std::size_t epoch, bool shuffle)
    : data_(&d), batch_size_(batch_size) {
  if (batch_size_ == 0) {
    throw ConfigError("batch size must be positive");
  }
  if (d.empty()) {
    throw DataError("batch: empty dataset");
  }
  order_.resize(d.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (shuffle) {
    Rng rng(derive_seed(seed, epoch));
    rng.shuffle(order_);
  }
}

std::size_t BatchStream::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

bool BatchStream::next(Tensor<float>& images, Tensor<float>& targets) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  const Shape& per_sample = data_->samples[order_[cursor_]].image.shape();

  images = Tensor<float>(batched(n, per_sample));
  targets = Tensor<float>(Shape{n, 2});
  const std::size_t elems = per_sample.element_count();
  for (std::size_t b = 0; b < n; ++b) {
    const Sample& sample = data_->samples[order_[cursor_ + b]];
    if (sample.image.shape() != per_sample) {
      throw ShapeError("batch: sample " + sample.path + " has shape " +
                       sample.image.shape().str() + ", expected " +
                       per_sample.str());
    }
    std::copy(sample.image.data(), sample.image.data() + elems,
              images.data() + b * elems);
    targets[b * 2 + sample.label] = 1.0f;
  }
  cursor_ += n;
  return true;
}

}  // namespace hemocnn
