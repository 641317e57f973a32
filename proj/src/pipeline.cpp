#include "lcg/pipeline.hpp"

#include <cmath>

namespace lcg {

namespace {

struct Accum {
  double abs = 0, sq = 0;
  std::size_t n = 0;

  void add(const Image& truth, const Image& output, const BinaryMask& mask) {
    if (!truth.same_layout(output) || mask.height() != truth.height || mask.width() != truth.width) {
      throw std::invalid_argument("metrics: image, output and mask must share a resolution");
    }
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      for (std::size_t ch = 0; ch < truth.channels; ++ch) {
        const double d = truth.pixels[i * truth.channels + ch] - output.pixels[i * truth.channels + ch];
        abs += std::abs(d);
        sq += d * d;
        ++n;
      }
    }
  }
  double l1() const { return n ? abs / static_cast<double>(n) : 0.0; }
  double psnr(double max_value) const {
    const double mse = n ? sq / static_cast<double>(n) : 0.0;
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
  }
};

}  // namespace

Shard generate_split(const RunConfig& cfg, Split split) {
  const std::uint64_t base = derive_seed(cfg.data_seed, split == Split::Train ? 0 : 1);
  const std::size_t count = split == Split::Train ? cfg.train_samples : cfg.eval_samples;
  std::vector<Scene> scenes;
  scenes.reserve(cfg.scenes);
  for (std::size_t i = 0; i < cfg.scenes; ++i) scenes.push_back(gen_scene(derive_seed(base, i), cfg.scene));
  Rng rng(derive_seed(base, cfg.scenes));
  Shard shard;
  shard.config = to_text(cfg);
  shard.samples = build_pairs(scenes, cfg.pairs, count, rng);
  return shard;
}

std::vector<TrainingExample> training_examples(std::span<const ImageMaskSample> samples,
                                               const ModelConfig& cfg) {
  std::vector<TrainingExample> out;
  out.reserve(samples.size());
  for (const ImageMaskSample& s : samples) {
    out.push_back(make_training_example(s.image, s.mask, s.category, cfg.denoiser));
  }
  return out;
}

ModelWeights<Tensor> initial_weights(const RunConfig& cfg) {
  return init_model(cfg.model, derive_seed(cfg.train.seed, 0));
}

Trainer make_trainer(const RunConfig& cfg, std::vector<TrainingExample> examples) {
  TrainConfig train = cfg.train;
  train.seed = derive_seed(cfg.train.seed, 1);
  return Trainer(cfg.model, train, cfg.schedule(), std::move(examples), initial_weights(cfg));
}

std::vector<Image> inpaint(std::span<const ImageMaskSample> samples, const ModelWeights<Tensor>& w,
                           const RunConfig& cfg, std::uint64_t seed, std::optional<Category> category) {
  std::vector<InpaintRequest> requests;
  requests.reserve(samples.size());
  for (const ImageMaskSample& s : samples) {
    requests.push_back({apply_mask(s.image, s.mask), s.mask, category.value_or(s.category)});
  }
  Rng rng(seed);
  return sample(requests, w, cfg.model, cfg.schedule(), cfg.sampler, rng);
}

double masked_l1(const Image& truth, const Image& output, const BinaryMask& mask) {
  Accum a;
  a.add(truth, output, mask);
  return a.l1();
}

double masked_psnr(const Image& truth, const Image& output, const BinaryMask& mask, double max_value) {
  Accum a;
  a.add(truth, output, mask);
  return a.psnr(max_value);
}

EvalReport evaluate(std::span<const ImageMaskSample> samples, std::span<const Image> outputs) {
  if (samples.size() != outputs.size()) throw std::invalid_argument("evaluate: one output per sample");
  static constexpr double kEdges[] = {0.0, 0.1, 0.3, 0.6, 1.0};
  constexpr std::size_t kBands = std::size(kEdges) - 1;
  Accum all;
  std::vector<Accum> bands(kBands);
  EvalReport report;
  report.by_coverage.resize(kBands);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImageMaskSample& s = samples[i];
    all.add(s.image, outputs[i], s.mask);
    const double cov = s.mask.coverage();
    std::size_t b = 0;
    while (b + 1 < kBands && cov >= kEdges[b + 1]) ++b;
    bands[b].add(s.image, outputs[i], s.mask);
    ++report.by_coverage[b].count;
  }
  report.overall = {0.0, 1.0, samples.size(), all.l1(), all.psnr(1.0)};
  for (std::size_t b = 0; b < kBands; ++b) {
    MetricBucket& m = report.by_coverage[b];
    m.coverage_lo = kEdges[b];
    m.coverage_hi = kEdges[b + 1];
    m.masked_l1 = bands[b].l1();
    m.psnr = bands[b].psnr(1.0);
  }
  return report;
}

}  // namespace lcg
