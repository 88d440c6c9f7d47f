#pragma once

#include <cstdint>
#include <filesystem>

#include "hemocnn/model.hpp"

namespace hemocnn {

// Checkpoint layout, little-endian throughout:
//   "BCM1" | u32 version=1 | u64 header length | JSON header | payload | u32 crc
// The JSON header carries the input shape, the layer list (kind plus
// hyperparameters), the seed, and a parameter manifest (name, shape, byte
// offset into the payload). The payload is raw 32-bit floats in manifest
// order; the CRC32 covers every byte before it.

void save_model(SequentialModel<float>& model,
                const std::filesystem::path& path);

SequentialModel<float> load_model(const std::filesystem::path& path);

// IEEE CRC32 (polynomial 0xEDB88320), as used by the checkpoint trailer.
std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

}  // namespace hemocnn
