#include "hemocnn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "hemocnn/errors.hpp"

namespace hemocnn {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();

  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) {
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

void save_model(SequentialModel<float>& model,
                const std::filesystem::path& path) {
  const auto params = model.params();

  nlohmann::json header;
  header["input_shape"] = model.input_shape().dims();
  header["seed"] = model.seed();
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerConfig& cfg : model.layer_configs()) {
    nlohmann::json args = nlohmann::json::object();
    for (const auto& [key, value] : cfg.args) args[key] = value;
    layers.push_back({{"kind", cfg.kind}, {"args", args}});
  }
  header["layers"] = layers;

  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    manifest.push_back({{"name", p.name},
                        {"shape", p.value->shape().dims()},
                        {"offset", offset}});
    offset += p.value->size() * 4;
  }
  header["params"] = manifest;

  const std::string header_text = header.dump();

  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + header_text.size() + offset + 4);
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_u32(bytes, kVersion);
  put_u64(bytes, header_text.size());
  bytes.insert(bytes.end(), header_text.begin(), header_text.end());
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      put_u32(bytes, std::bit_cast<std::uint32_t>((*p.value)[i]));
    }
  }
  put_u32(bytes, crc32(bytes.data(), bytes.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot open checkpoint " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("short write to checkpoint " + path.string());
  }
}

SequentialModel<float> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  if (bytes.size() < 20) {
    throw FormatError("checkpoint: file too short");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  if (get_u32(bytes.data() + 4) != kVersion) {
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(get_u32(bytes.data() + 4)));
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (16 + header_len + 4 > bytes.size()) {
    throw FormatError("checkpoint: truncated header");
  }
  const std::uint32_t stored_crc = get_u32(bytes.data() + bytes.size() - 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw FormatError("checkpoint: checksum mismatch");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 +
                                       static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }

  try {
    const auto dims = header.at("input_shape").get<std::vector<std::size_t>>();
    SequentialModel<float> model(Shape(dims),
                                 header.at("seed").get<std::uint64_t>());
    for (const auto& entry : header.at("layers")) {
      LayerConfig cfg;
      cfg.kind = entry.at("kind").get<std::string>();
      for (const auto& [key, value] : entry.at("args").items()) {
        cfg.args.emplace_back(key, value.get<double>());
      }
      model.add(make_layer<float>(cfg));
    }

    const auto params = model.params();
    const auto& manifest = header.at("params");
    if (manifest.size() != params.size()) {
      throw FormatError("checkpoint: manifest lists " +
                        std::to_string(manifest.size()) + " tensors, model has " +
                        std::to_string(params.size()));
    }
    const std::size_t payload_begin = 16 + header_len;
    const std::size_t payload_size = bytes.size() - 4 - payload_begin;
    for (std::size_t t = 0; t < params.size(); ++t) {
      const auto& m = manifest.at(t);
      const auto name = m.at("name").get<std::string>();
      const Shape shape(m.at("shape").get<std::vector<std::size_t>>());
      if (name != params[t].name || shape != params[t].value->shape()) {
        throw FormatError("checkpoint: tensor '" + name +
                          "' does not match model parameter '" +
                          params[t].name + "'");
      }
      const std::uint64_t offset = m.at("offset").get<std::uint64_t>();
      const std::size_t count = params[t].value->size();
      if (offset + count * 4 > payload_size) {
        throw FormatError("checkpoint: payload truncated for '" + name + "'");
      }
      const std::uint8_t* src = bytes.data() + payload_begin + offset;
      for (std::size_t i = 0; i < count; ++i) {
        (*params[t].value)[i] = std::bit_cast<float>(get_u32(src + i * 4));
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
}

}  // namespace hemocnn
