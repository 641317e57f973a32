#pragma once

#include <vector>

#include "lcg/conditioning.hpp"
#include "lcg/interaction.hpp"

namespace lcg {

/// Latent-space ε-predictor. Every latent cell is one token; resolution levels
/// are joined by 2×2 token space-to-depth (down) and depth-to-space (up), with
/// skip connections merged by concatenation and a linear map. Blocks alternate
/// between raster and reversed raster scan order: down stages start in raster
/// order, the bottleneck and up stages start reversed. The output head adds a
/// linear map of the raw input rows to the projection of the final tokens.
struct DenoiserConfig {
  std::size_t image_size = 32;
  std::size_t image_channels = 3;
  std::size_t factor = 4;                    // codec block size f
  std::vector<std::size_t> widths{48, 96};   // token width per level
  std::vector<std::size_t> blocks{1, 1};     // interaction blocks per level (up path mirrors)
  std::vector<bool> cross{true, true};       // cross-attention enabled per level
  std::size_t heads = 1;
  double tau = 16.0;
  std::size_t time_dim = 32;
  std::size_t embed_width = 32;  // condition token width d_e
  std::size_t mlp_ratio = 4;
  double guidance_scale = 2.0;

  std::size_t levels() const { return widths.size(); }
  std::size_t grid() const { return image_size / factor; }
  std::size_t grid_at(std::size_t level) const { return grid() >> level; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t latent_channels() const { return image_channels * factor * factor; }
  /// Mask channel plus masked-image latent.
  std::size_t cond_channels() const { return 1 + latent_channels(); }
  InteractionConfig block_config(std::size_t level) const;
  void validate() const;
};

template <class T>
struct DenoiserWeights {
  T in_w, in_b;
  T time_w, time_b;
  std::vector<std::vector<InteractionWeights<T>>> down;  // levels − 1
  std::vector<T> down_w, down_b;
  std::vector<InteractionWeights<T>> mid;
  std::vector<T> up_w, up_b;
  std::vector<T> merge_w, merge_b;
  std::vector<std::vector<InteractionWeights<T>>> up;  // indexed by target level
  NormWeights<T> out_norm;
  T out_w, out_b;
  T out_skip;  // direct map from the concatenated input to ε̂, zero at init
};

template <class F, InstanceOf<DenoiserWeights> W0, class... W>
void visit_params(const std::string& p, F&& f, W0&& w0, W&&... w) {
  auto indexed = [&](const std::string& base, std::size_t i) {
    return p + base + "." + std::to_string(i) + ".";
  };
  f(p + "in_w", w0.in_w, w.in_w...);
  f(p + "in_b", w0.in_b, w.in_b...);
  f(p + "time_w", w0.time_w, w.time_w...);
  f(p + "time_b", w0.time_b, w.time_b...);
  sync_size(w0.down, w.down...);
  sync_size(w0.down_w, w.down_w...);
  sync_size(w0.down_b, w.down_b...);
  for (std::size_t i = 0; i < w0.down.size(); ++i) {
    sync_size(w0.down[i], w.down[i]...);
    for (std::size_t b = 0; b < w0.down[i].size(); ++b) {
      visit_params(indexed("down", i) + std::to_string(b) + ".", f, w0.down[i][b], w.down[i][b]...);
    }
    f(indexed("down_proj", i) + "w", w0.down_w[i], w.down_w[i]...);
    f(indexed("down_proj", i) + "b", w0.down_b[i], w.down_b[i]...);
  }
  sync_size(w0.mid, w.mid...);
  for (std::size_t b = 0; b < w0.mid.size(); ++b) {
    visit_params(indexed("mid", b), f, w0.mid[b], w.mid[b]...);
  }
  sync_size(w0.up, w.up...);
  sync_size(w0.up_w, w.up_w...);
  sync_size(w0.up_b, w.up_b...);
  sync_size(w0.merge_w, w.merge_w...);
  sync_size(w0.merge_b, w.merge_b...);
  for (std::size_t i = 0; i < w0.up.size(); ++i) {
    f(indexed("up_proj", i) + "w", w0.up_w[i], w.up_w[i]...);
    f(indexed("up_proj", i) + "b", w0.up_b[i], w.up_b[i]...);
    f(indexed("merge", i) + "w", w0.merge_w[i], w.merge_w[i]...);
    f(indexed("merge", i) + "b", w0.merge_b[i], w.merge_b[i]...);
    sync_size(w0.up[i], w.up[i]...);
    for (std::size_t b = 0; b < w0.up[i].size(); ++b) {
      visit_params(indexed("up", i) + std::to_string(b) + ".", f, w0.up[i][b], w.up[i][b]...);
    }
  }
  visit_params(p + "out_norm.", f, w0.out_norm, w.out_norm...);
  f(p + "out_w", w0.out_w, w.out_w...);
  f(p + "out_b", w0.out_b, w.out_b...);
  f(p + "out_skip", w0.out_skip, w.out_skip...);
}

/// `residual_scale` scales every residual-branch output projection at init.
DenoiserWeights<Tensor> init_denoiser(const DenoiserConfig& cfg, Rng& rng,
                                      double residual_scale = 0.2);

/// Zeroes every interaction block's branch outputs so each block is the identity.
void zero_block_outputs(DenoiserWeights<Tensor>& w);

/// One batch of denoiser inputs, samples stacked along rows.
struct DenoiserBatch {
  Tensor noisy;         // (B·N)×latent_channels
  Tensor conditioning;  // (B·N)×cond_channels: mask, then masked-image latent
  std::vector<std::size_t> timesteps;  // B entries in [1, T]

  std::size_t batch() const { return timesteps.size(); }
};

/// Sinusoidal timestep features, B×dim.
Tensor timestep_embedding(std::span<const std::size_t> timesteps, std::size_t dim);

/// Token-grid 2×2 space-to-depth on (B·g²)×w rows → (B·(g/2)²)×4w.
Var tokens_space_to_depth(Var x, std::size_t grid);
/// Inverse of tokens_space_to_depth; `grid` is the output grid side.
Var tokens_depth_to_space(Var x, std::size_t grid);

/// ε̂ with the same shape as batch.noisy. `cond_tokens` holds m rows per sample.
Var denoise(const DenoiserBatch& batch, Var cond_tokens, const DenoiserWeights<Var>& w,
            const DenoiserConfig& cfg);

}  // namespace lcg
