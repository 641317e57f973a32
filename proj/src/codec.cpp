#include "lcg/codec.hpp"

#include <stdexcept>
#include <string>

namespace lcg {

namespace {

void check_divisible(std::size_t h, std::size_t w, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("codec: factor must be positive");
  if (h % factor != 0 || w % factor != 0) {
    throw std::invalid_argument("codec: " + std::to_string(h) + "x" + std::to_string(w) +
                                " is not divisible by factor " + std::to_string(factor));
  }
}

void check_mask_layout(const Image& image, const BinaryMask& mask, const char* op) {
  if (mask.height() != image.height || mask.width() != image.width) {
    throw std::invalid_argument(std::string(op) + ": mask is " + std::to_string(mask.height()) +
                                "x" + std::to_string(mask.width()) + ", image is " +
                                std::to_string(image.height) + "x" + std::to_string(image.width));
  }
}

}  // namespace

Tensor space_to_depth(const Image& image, std::size_t factor) {
  check_divisible(image.height, image.width, factor);
  const std::size_t c = image.channels;
  const std::size_t gh = image.height / factor, gw = image.width / factor;
  const std::size_t depth = c * factor * factor;
  Tensor out({gh, gw, depth});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::size_t cell = (y / factor) * gw + x / factor;
      const std::size_t sub = (y % factor) * factor + x % factor;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[cell * depth + sub * c + ch] = image.at(y, x, ch);
      }
    }
  }
  return out;
}

Image depth_to_space(const Tensor& latent, std::size_t channels, std::size_t factor) {
  if (latent.rank() != 3 || factor == 0 || channels == 0 ||
      latent.dim(2) != channels * factor * factor) {
    throw std::invalid_argument("decode: latent " + shape_str(latent.shape()) +
                                " does not have c*f^2 = " +
                                std::to_string(channels * factor * factor) + " channels");
  }
  const std::size_t gh = latent.dim(0), gw = latent.dim(1), depth = latent.dim(2);
  Image out(gh * factor, gw * factor, channels);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const std::size_t cell = (y / factor) * gw + x / factor;
      const std::size_t sub = (y % factor) * factor + x % factor;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        out.at(y, x, ch) = latent[cell * depth + sub * channels + ch];
      }
    }
  }
  return out;
}

Image apply_mask(const Image& image, const BinaryMask& mask) {
  check_mask_layout(image, mask, "apply_mask");
  Image out = image;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      for (std::size_t ch = 0; ch < image.channels; ++ch) out.pixels[i * image.channels + ch] = 0.0;
    }
  }
  return out;
}

Tensor LatentInputs::concatenated() const {
  const std::size_t gh = image.dim(0), gw = image.dim(1);
  const std::size_t a = image.dim(2), b = mask.dim(2), c = masked_image.dim(2);
  const std::size_t depth = a + b + c;
  Tensor out({gh, gw, depth});
  for (std::size_t cell = 0; cell < gh * gw; ++cell) {
    double* dst = &out[cell * depth];
    for (std::size_t j = 0; j < a; ++j) dst[j] = image[cell * a + j];
    for (std::size_t j = 0; j < b; ++j) dst[a + j] = mask[cell * b + j];
    for (std::size_t j = 0; j < c; ++j) dst[a + b + j] = masked_image[cell * c + j];
  }
  return out;
}

LatentInputs encode_inputs(const Image& image, const BinaryMask& mask, const Image& masked_image,
                           std::size_t factor) {
  check_divisible(image.height, image.width, factor);
  check_mask_layout(image, mask, "encode_inputs");
  if (!image.same_layout(masked_image)) {
    throw std::invalid_argument("encode_inputs: masked image layout differs from image");
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    for (std::size_t ch = 0; ch < image.channels; ++ch) {
      const std::size_t k = i * image.channels + ch;
      const double expected = mask[i] ? 0.0 : image.pixels[k];
      if (masked_image.pixels[k] != expected) {
        throw std::invalid_argument("encode_inputs: masked image is not image*(1-mask) at pixel " +
                                    std::to_string(i));
      }
    }
  }
  LatentInputs out;
  out.image = space_to_depth(image, factor);
  out.masked_image = space_to_depth(masked_image, factor);
  const std::size_t gh = image.height / factor, gw = image.width / factor;
  out.mask = Tensor({gh, gw, 1});
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      if (mask.at(y, x)) out.mask[(y / factor) * gw + x / factor] = 1.0;
  return out;
}

Image decode_output(const Tensor& latent, std::size_t channels, std::size_t factor) {
  return depth_to_space(latent, channels, factor);
}

Image composite(const Image& original, const Image& generated, const BinaryMask& mask) {
  if (!original.same_layout(generated)) {
    throw std::invalid_argument("composite: generated image layout differs from original");
  }
  check_mask_layout(original, mask, "composite");
  Image out = original;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t ch = 0; ch < original.channels; ++ch) {
      out.pixels[i * original.channels + ch] = generated.pixels[i * original.channels + ch];
    }
  }
  return out;
}

}  // namespace lcg
