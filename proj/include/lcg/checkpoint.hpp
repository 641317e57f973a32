#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lcg/binary_io.hpp"
#include "lcg/training.hpp"

namespace lcg {

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class Dtype : std::uint8_t { F64 = 0, F32 = 1 };

struct NamedTensor {
  std::string name;
  Dtype dtype = Dtype::F64;
  Tensor value;  // already rounded to `dtype`

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Layout, little-endian throughout:
//   "LCGC" | u16 version | u32 n + config text | u64 step
//   table(params) | u64 optimizer step | table(first moments) | table(second moments)
//   u32 n + RNG state text | u32 CRC32 of all preceding bytes
// table = u32 count, then per entry: u16 n + name | u8 dtype | u8 rank | u64 dims[rank]
//         | payload (f64 or f32 per element)

struct Checkpoint {
  std::string config;
  std::uint64_t step = 0;
  std::vector<NamedTensor> params;
  std::uint64_t optimizer_step = 0;
  std::vector<NamedTensor> first_moment;
  std::vector<NamedTensor> second_moment;
  std::string rng_state;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError (with byte offset) or ChecksumError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters in visit order, rounded to `dtype`.
std::vector<NamedTensor> named_tensors(const ModelWeights<Tensor>& w, Dtype dtype = Dtype::F64);
/// Copies a table into `w`; names, order and shapes must match exactly.
void assign_tensors(ModelWeights<Tensor>& w, std::span<const NamedTensor> table);

Checkpoint make_checkpoint(const Trainer& trainer, std::string config, Dtype dtype = Dtype::F64);
/// Loads parameters, optimizer moments and RNG position into a trainer built
/// from the same model config.
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);
/// Parameters only, for sampling and evaluation.
ModelWeights<Tensor> checkpoint_weights(const Checkpoint& ckpt, const ModelConfig& cfg);

}  // namespace lcg
