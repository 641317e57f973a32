#pragma once

#include <cstddef>
#include <vector>

#include "lcg/conditioning.hpp"
#include "lcg/tensor.hpp"

namespace lcg {

/// Interleaved H×W×C image, values nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t ch) {
    return pixels[(y * width + x) * channels + ch];
  }
  double at(std::size_t y, std::size_t x, std::size_t ch) const {
    return pixels[(y * width + x) * channels + ch];
  }
  bool same_layout(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

// Exact, invertible stand-in for a latent autoencoder: f×f pixel blocks are
// rearranged into channels, so an H×W×c image becomes (H/f)×(W/f)×(c·f²).
// Within a cell, channel index = (dy·f + dx)·c + ch.

Tensor space_to_depth(const Image& image, std::size_t factor);
Image depth_to_space(const Tensor& latent, std::size_t channels, std::size_t factor);

/// image ⊙ (1 − mask).
Image apply_mask(const Image& image, const BinaryMask& mask);

struct LatentInputs {
  Tensor image;         // (H/f)×(W/f)×(c·f²)
  Tensor mask;          // (H/f)×(W/f)×1, max-pooled
  Tensor masked_image;  // (H/f)×(W/f)×(c·f²)

  /// Channel concatenation (image, mask, masked_image).
  Tensor concatenated() const;
};

/// Throws std::invalid_argument when H or W is not divisible by `factor` or
/// `masked_image` is not exactly image ⊙ (1 − mask).
LatentInputs encode_inputs(const Image& image, const BinaryMask& mask, const Image& masked_image,
                           std::size_t factor);

/// Inverse of the image path. Throws if the channel count is not c·f².
Image decode_output(const Tensor& latent, std::size_t channels, std::size_t factor);

/// mask ? generated : original, per pixel. Unmasked pixels are copied bit-for-bit.
Image composite(const Image& original, const Image& generated, const BinaryMask& mask);

}  // namespace lcg
