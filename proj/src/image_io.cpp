#include "lcg/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "lcg/binary_io.hpp"

namespace lcg {

namespace {

class PnmHeader {
 public:
  explicit PnmHeader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t number(const char* what) {
    skip_space();
    const std::size_t at = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1u << 24)) throw FormatError(std::string("pnm: ") + what + " too large", at);
    }
    if (pos_ == at) throw FormatError(std::string("pnm: expected ") + what, at);
    return v;
  }

  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t pos_ = 0;
  std::span<const std::uint8_t> bytes_;
};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("pnm: only 1- and 3-channel images are supported");
  }
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) out.push_back(to_byte(v));
  return out;
}

Image decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("pnm: expected P5 or P6 magic", 0);
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  PnmHeader h(bytes);
  h.pos_ = 2;
  const std::size_t width = h.number("width");
  const std::size_t height = h.number("height");
  const std::size_t maxval = h.number("maxval");
  if (width == 0 || height == 0) throw FormatError("pnm: zero extent", h.pos_);
  if (maxval == 0 || maxval > 255) throw FormatError("pnm: only 8-bit maxval is supported", h.pos_);
  if (h.pos_ >= bytes.size() || !std::isspace(bytes[h.pos_])) {
    throw FormatError("pnm: expected whitespace after maxval", h.pos_);
  }
  ++h.pos_;
  const std::size_t n = width * height * channels;
  if (bytes.size() - h.pos_ < n) {
    throw FormatError("pnm: truncated raster, need " + std::to_string(n) + " bytes", h.pos_);
  }
  Image image(height, width, channels);
  for (std::size_t i = 0; i < n; ++i) {
    image.pixels[i] = static_cast<double>(bytes[h.pos_ + i]) / static_cast<double>(maxval);
  }
  return image;
}

void write_image(const Image& image, const std::filesystem::path& path) {
  write_file(path, encode_pnm(image));
}

Image read_image(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

void write_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  Image im(mask.height(), mask.width(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) im.pixels[i] = mask[i];
  write_image(im, path);
}

BinaryMask read_mask(const std::filesystem::path& path) {
  const Image im = read_image(path);
  if (im.channels != 1) throw FormatError("mask must be a graymap (P5)", 0);
  std::vector<std::uint8_t> bits(im.pixels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const double v = im.pixels[i];
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument("mask " + path.string() + " is not binary at pixel " +
                                  std::to_string(i));
    }
    bits[i] = v == 1.0 ? 1 : 0;
  }
  return BinaryMask(im.height, im.width, std::move(bits));
}

}  // namespace lcg
