#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lcg/binary_io.hpp"
#include "lcg/data_forge.hpp"

namespace lcg {

inline constexpr std::uint16_t kShardVersion = 1;

// Layout, little-endian throughout:
//   "LCGS" | u16 version | u64 count | u32 n + n bytes of resolved config text
//   per sample: u32 height | u32 width | u32 channels | u8 category | u8 mask_kind
//               | u64 seed | f64 pixels[h·w·c] | mask bits, LSB first, ⌈h·w/8⌉ bytes
//   u32 CRC32 of all preceding bytes

struct Shard {
  std::string config;  // resolved config text of the producing run
  std::vector<ImageMaskSample> samples;

  friend bool operator==(const Shard&, const Shard&) = default;
};

std::vector<std::uint8_t> encode_shard(const Shard& shard);
/// Throws FormatError (with byte offset) or ChecksumError.
Shard decode_shard(std::span<const std::uint8_t> bytes);

void write_shard(const Shard& shard, const std::filesystem::path& path);
Shard read_shard(const std::filesystem::path& path);

}  // namespace lcg
