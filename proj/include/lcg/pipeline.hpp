#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcg/config.hpp"
#include "lcg/shard.hpp"
#include "lcg/training.hpp"

namespace lcg {

enum class Split { Train, Eval };

/// Scenes and pairs for one split. Train and eval scenes come from disjoint
/// seed streams; the shard embeds the canonical config text.
Shard generate_split(const RunConfig& cfg, Split split);

std::vector<TrainingExample> training_examples(std::span<const ImageMaskSample> samples,
                                               const ModelConfig& cfg);

ModelWeights<Tensor> initial_weights(const RunConfig& cfg);
Trainer make_trainer(const RunConfig& cfg, std::vector<TrainingExample> examples);

/// Fills the masked region of every sample. `category` overrides the
/// per-sample label when set.
std::vector<Image> inpaint(std::span<const ImageMaskSample> samples, const ModelWeights<Tensor>& w,
                           const RunConfig& cfg, std::uint64_t seed,
                           std::optional<Category> category = std::nullopt);

inline constexpr double kPsnrCap = 99.0;

/// Mean |a − b| over masked pixels and channels; 0 for an empty mask.
double masked_l1(const Image& truth, const Image& output, const BinaryMask& mask);
/// 10·log10(max²/MSE) over masked pixels, capped at kPsnrCap.
double masked_psnr(const Image& truth, const Image& output, const BinaryMask& mask,
                   double max_value = 1.0);

struct MetricBucket {
  double coverage_lo = 0, coverage_hi = 0;
  std::size_t count = 0;
  double masked_l1 = 0;
  double psnr = kPsnrCap;
};

struct EvalReport {
  MetricBucket overall;
  std::vector<MetricBucket> by_coverage;
};

/// Pooled over masked pixels of all samples, overall and in coverage bands
/// [0, .1), [.1, .3), [.3, .6), [.6, 1].
EvalReport evaluate(std::span<const ImageMaskSample> samples, std::span<const Image> outputs);

}  // namespace lcg
