#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lcg/codec.hpp"
#include "lcg/conditioning.hpp"

namespace lcg {

// Binary netpbm: P6 for 3-channel images, P5 for 1-channel images and masks.
// Samples are 8-bit; pixel values are stored as round(255·v), so any image
// already quantized to k/255 survives a roundtrip exactly.

std::vector<std::uint8_t> encode_pnm(const Image& image);
Image decode_pnm(std::span<const std::uint8_t> bytes);

void write_image(const Image& image, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

/// Masks are written as 0/255 graymaps.
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);
/// Throws unless every sample is 0 or maxval.
BinaryMask read_mask(const std::filesystem::path& path);

}  // namespace lcg
