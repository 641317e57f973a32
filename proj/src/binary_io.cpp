#include "lcg/binary_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lcg {

namespace {

std::string hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

}  // namespace

ChecksumError::ChecksumError(std::uint32_t stored, std::uint32_t computed, std::size_t offset)
    : FormatError("checksum mismatch: stored " + hex(stored) + ", computed " + hex(computed),
                  offset) {}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const std::size_t chunk = 1u << 30;
  for (std::size_t i = 0; i < bytes.size(); i += chunk) {
    const auto n = static_cast<uInt>(std::min(chunk, bytes.size() - i));
    crc = ::crc32(crc, bytes.data() + i, n);
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

void ByteWriter::blob(std::string_view s) {
  if (s.size() > UINT32_MAX) throw std::length_error("blob exceeds 4 GiB");
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void ByteWriter::seal() { u32(crc32(bytes_)); }

void ByteReader::require(std::size_t n, std::string_view what) const {
  if (n > remaining()) {
    throw FormatError("truncated: " + std::string(what) + " needs " + std::to_string(n) +
                          " bytes, " + std::to_string(remaining()) + " left",
                      pos_);
  }
}

std::uint8_t ByteReader::u8() {
  require(1, "u8");
  return bytes_[pos_++];
}

std::uint16_t ByteReader::u16() {
  require(2, "u16");
  std::uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint32_t ByteReader::u32() {
  require(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  require(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::raw(std::size_t n) {
  require(n, "string");
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::blob() { return raw(u32()); }

void ByteReader::expect_magic(std::string_view magic) {
  const std::size_t at = pos_;
  if (raw(magic.size()) != magic) {
    throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", at);
  }
}

void ByteReader::verify_seal() {
  const std::size_t at = pos_;
  const std::uint32_t computed = crc32(bytes_.first(pos_));
  const std::uint32_t stored = u32();
  if (stored != computed) throw ChecksumError(stored, computed, at);
  if (remaining() != 0) {
    throw FormatError(std::to_string(remaining()) + " trailing bytes after checksum", pos_);
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lcg
