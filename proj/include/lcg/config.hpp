#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "lcg/data_forge.hpp"
#include "lcg/diffusion.hpp"
#include "lcg/training.hpp"

namespace lcg {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Bad key, bad value or inconsistent settings. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StorageType { F64, F32 };

/// Every tunable of a run. Text form is INI: `[section]` headers and
/// `key = value` lines, `#` or `;` comments. Unknown keys are rejected.
struct RunConfig {
  ModelConfig model;

  std::size_t timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  SamplerConfig sampler;
  std::uint64_t sample_seed = 7;

  TrainConfig train;
  std::size_t checkpoint_every = 500;
  StorageType checkpoint_dtype = StorageType::F64;

  std::uint64_t data_seed = 1;
  std::size_t scenes = 256;
  std::size_t train_samples = 512;
  std::size_t eval_samples = 32;
  SceneConfig scene;
  PairConfig pairs;

  std::string train_data = "data/train.lcgs";
  std::string eval_data = "data/eval.lcgs";
  std::string run_dir = "run";

  DiffusionSchedule schedule() const;
  /// Throws ConfigError naming the offending keys.
  void validate() const;
};

/// Defaults overlaid with `text`; validated.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text: a version comment, then every key in a fixed order.
/// parse_config(to_text(c)) reproduces c exactly.
std::string to_text(const RunConfig& cfg);

/// Canonical text without keys that may change on resume (run length, thread
/// count, checkpoint cadence, sampling and paths).
std::string training_identity(const RunConfig& cfg);

/// Overwrites one key, given as "section.key".
void set_key(RunConfig& cfg, std::string_view dotted, std::string_view value);

}  // namespace lcg
