#include "lcg/shard.hpp"

namespace lcg {

std::vector<std::uint8_t> encode_shard(const Shard& shard) {
  ByteWriter w;
  w.raw("LCGS");
  w.u16(kShardVersion);
  w.u64(shard.samples.size());
  w.blob(shard.config);
  for (const ImageMaskSample& s : shard.samples) {
    const Image& im = s.image;
    if (im.pixels.size() != im.height * im.width * im.channels) {
      throw std::invalid_argument("encode_shard: image buffer does not match its dimensions");
    }
    if (s.mask.height() != im.height || s.mask.width() != im.width) {
      throw std::invalid_argument("encode_shard: mask resolution differs from image");
    }
    w.u32(static_cast<std::uint32_t>(im.height));
    w.u32(static_cast<std::uint32_t>(im.width));
    w.u32(static_cast<std::uint32_t>(im.channels));
    w.u8(static_cast<std::uint8_t>(s.category));
    w.u8(static_cast<std::uint8_t>(s.mask_kind));
    w.u64(s.seed);
    for (double p : im.pixels) w.f64(p);
    const auto& bits = s.mask.values();
    for (std::size_t i = 0; i < bits.size(); i += 8) {
      std::uint8_t byte = 0;
      for (std::size_t b = 0; b < 8 && i + b < bits.size(); ++b) {
        if (bits[i + b]) byte |= static_cast<std::uint8_t>(1u << b);
      }
      w.u8(byte);
    }
  }
  w.seal();
  return w.take();
}

Shard decode_shard(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("LCGS");
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kShardVersion) {
    throw FormatError("unsupported shard version " + std::to_string(version), version_at);
  }
  const std::uint64_t count = r.u64();
  Shard shard;
  shard.config = r.blob();
  // Each sample needs at least its 22-byte header.
  if (count > r.remaining() / 22) {
    throw FormatError("truncated: " + std::to_string(count) + " samples cannot fit in " +
                          std::to_string(r.remaining()) + " bytes",
                      r.offset());
  }
  shard.samples.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::size_t at = r.offset();
    ImageMaskSample s;
    const std::size_t h = r.u32(), w = r.u32(), c = r.u32();
    if (h == 0 || w == 0 || c == 0) throw FormatError("zero image extent in sample " + std::to_string(n), at);
    const std::uint8_t category = r.u8();
    const std::uint8_t kind = r.u8();
    if (category > static_cast<std::uint8_t>(Category::Null)) {
      throw FormatError("invalid category byte " + std::to_string(category), r.offset() - 2);
    }
    if (kind > static_cast<std::uint8_t>(MaskKind::RandomObject)) {
      throw FormatError("invalid mask kind byte " + std::to_string(kind), r.offset() - 1);
    }
    s.category = static_cast<Category>(category);
    s.mask_kind = static_cast<MaskKind>(kind);
    s.seed = r.u64();
    const std::size_t pixels = h * w * c;
    if (pixels / c / w != h) throw FormatError("image dimensions overflow", at);
    if (pixels > r.remaining() / 8) {
      throw FormatError("truncated: pixel payload of sample " + std::to_string(n), r.offset());
    }
    s.image = Image(h, w, c);
    for (double& p : s.image.pixels) p = r.f64();
    const std::size_t packed = (h * w + 7) / 8;
    r.require(packed, "mask payload");
    std::vector<std::uint8_t> bits(h * w);
    for (std::size_t i = 0; i < packed; ++i) {
      const std::uint8_t byte = r.u8();
      for (std::size_t b = 0; b < 8 && 8 * i + b < bits.size(); ++b) bits[8 * i + b] = (byte >> b) & 1u;
    }
    s.mask = BinaryMask(h, w, std::move(bits));
    shard.samples.push_back(std::move(s));
  }
  r.verify_seal();
  return shard;
}

void write_shard(const Shard& shard, const std::filesystem::path& path) {
  write_file(path, encode_shard(shard));
}

Shard read_shard(const std::filesystem::path& path) { return decode_shard(read_file(path)); }

}  // namespace lcg
