#include "lcg/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace lcg {

InteractionConfig DenoiserConfig::block_config(std::size_t level) const {
  InteractionConfig c;
  c.gla.width = widths.at(level);
  c.gla.key_dim = widths.at(level) / 2;
  c.gla.value_dim = widths.at(level) / 2;
  c.gla.heads = heads;
  c.gla.tau = tau;
  c.embed_width = embed_width;
  c.cross_width = widths.at(level);
  c.mlp_ratio = mlp_ratio;
  c.cross = cross.at(level);
  return c;
}

void DenoiserConfig::validate() const {
  if (widths.empty()) throw std::invalid_argument("denoiser: at least one level is required");
  if (blocks.size() != widths.size() || cross.size() != widths.size()) {
    throw std::invalid_argument("denoiser: widths, blocks and cross must have one entry per level");
  }
  if (factor == 0 || image_size % factor != 0) {
    throw std::invalid_argument("denoiser: image_size must be divisible by the codec factor");
  }
  if (grid() % (std::size_t{1} << (levels() - 1)) != 0) {
    throw std::invalid_argument("denoiser: latent grid " + std::to_string(grid()) +
                                " cannot be halved " + std::to_string(levels() - 1) + " times");
  }
  if (time_dim == 0 || time_dim % 2 != 0) {
    throw std::invalid_argument("denoiser: time_dim must be positive and even");
  }
  if (!(guidance_scale >= 1.0)) throw std::invalid_argument("denoiser: guidance scale must be >= 1");
  for (std::size_t l = 0; l < levels(); ++l) block_config(l).validate();
}

DenoiserWeights<Tensor> init_denoiser(const DenoiserConfig& cfg, Rng& rng,
                                      double residual_scale) {
  cfg.validate();
  auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  auto dense = [&](std::size_t in, std::size_t out) {
    return normal_tensor({in, out}, fan_in(in), rng);
  };
  const std::size_t levels = cfg.levels();
  const std::size_t w0 = cfg.widths[0];

  DenoiserWeights<Tensor> w;
  w.in_w = dense(cfg.latent_channels() + cfg.cond_channels(), w0);
  w.in_b = Tensor({w0});
  w.time_w = dense(cfg.time_dim, w0);
  w.time_b = Tensor({w0});
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    auto& stage = w.down.emplace_back();
    for (std::size_t b = 0; b < cfg.blocks[l]; ++b) {
      stage.push_back(init_interaction(cfg.block_config(l), rng, residual_scale));
    }
    w.down_w.push_back(dense(4 * cfg.widths[l], cfg.widths[l + 1]));
    w.down_b.push_back(Tensor({cfg.widths[l + 1]}));
  }
  for (std::size_t b = 0; b < cfg.blocks[levels - 1]; ++b) {
    w.mid.push_back(init_interaction(cfg.block_config(levels - 1), rng, residual_scale));
  }
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    w.up_w.push_back(dense(cfg.widths[l + 1], 4 * cfg.widths[l]));
    w.up_b.push_back(Tensor({4 * cfg.widths[l]}));
    w.merge_w.push_back(dense(2 * cfg.widths[l], cfg.widths[l]));
    w.merge_b.push_back(Tensor({cfg.widths[l]}));
    auto& stage = w.up.emplace_back();
    for (std::size_t b = 0; b < cfg.blocks[l]; ++b) {
      stage.push_back(init_interaction(cfg.block_config(l), rng, residual_scale));
    }
  }
  w.out_norm = make_norm(w0);
  w.out_w = normal_tensor({w0, cfg.latent_channels()}, residual_scale * fan_in(w0), rng);
  w.out_b = Tensor({cfg.latent_channels()});
  w.out_skip = Tensor({cfg.latent_channels() + cfg.cond_channels(), cfg.latent_channels()});
  return w;
}

void zero_block_outputs(DenoiserWeights<Tensor>& w) {
  for (auto& stage : w.down)
    for (auto& b : stage) zero_branch_outputs(b);
  for (auto& b : w.mid) zero_branch_outputs(b);
  for (auto& stage : w.up)
    for (auto& b : stage) zero_branch_outputs(b);
}

Tensor timestep_embedding(std::span<const std::size_t> timesteps, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor out({timesteps.size(), dim});
  for (std::size_t b = 0; b < timesteps.size(); ++b) {
    const double t = static_cast<double>(timesteps[b]);
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                                   static_cast<double>(half));
      out[b * dim + k] = std::sin(t * freq);
      out[b * dim + half + k] = std::cos(t * freq);
    }
  }
  return out;
}

Var tokens_space_to_depth(Var x, std::size_t grid) {
  const Tensor& v = x.value();
  const std::size_t tokens = grid * grid;
  if (v.rank() != 2 || grid % 2 != 0 || v.dim(0) % tokens != 0) {
    throw ShapeError("tokens_space_to_depth: " + shape_str(v.shape()) + " is not a batch of " +
                     std::to_string(grid) + "x" + std::to_string(grid) + " grids");
  }
  const std::size_t w = v.dim(1), batch = v.dim(0) / tokens, half = grid / 2;
  std::vector<std::size_t> index;
  index.reserve(v.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t y = 0; y < half; ++y)
      for (std::size_t x2 = 0; x2 < half; ++x2)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t src = b * tokens + (2 * y + dy) * grid + (2 * x2 + dx);
            for (std::size_t c = 0; c < w; ++c) index.push_back(src * w + c);
          }
  return gather(x, std::move(index), {batch * half * half, 4 * w});
}

Var tokens_depth_to_space(Var x, std::size_t grid) {
  const Tensor& v = x.value();
  const std::size_t half = grid / 2;
  const std::size_t coarse = half * half;
  if (v.rank() != 2 || grid % 2 != 0 || v.dim(0) % coarse != 0 || v.dim(1) % 4 != 0) {
    throw ShapeError("tokens_depth_to_space: " + shape_str(v.shape()) +
                     " does not unfold to a grid of side " + std::to_string(grid));
  }
  const std::size_t w = v.dim(1) / 4, batch = v.dim(0) / coarse;
  std::vector<std::size_t> index;
  index.reserve(v.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t y = 0; y < grid; ++y)
      for (std::size_t x2 = 0; x2 < grid; ++x2) {
        const std::size_t src = b * coarse + (y / 2) * half + x2 / 2;
        const std::size_t sub = (y % 2) * 2 + x2 % 2;
        for (std::size_t c = 0; c < w; ++c) index.push_back(src * 4 * w + sub * w + c);
      }
  return gather(x, std::move(index), {batch * grid * grid, w});
}

namespace {

// Reverses token order inside every sequence of `seq_len` rows.
Var reverse_tokens(Var x, std::size_t seq_len) {
  const std::size_t rows = x.value().rows();
  std::vector<std::size_t> order(rows);
  for (std::size_t r = 0; r < rows; ++r) order[r] = r - r % seq_len + (seq_len - 1 - r % seq_len);
  return gather_rows(x, order);
}

// One stage of blocks. Scan direction alternates from block to block, starting
// in raster order when `reversed_first` is false.
Var run_stage(Var h, Var cond_tokens, std::span<const InteractionWeights<Var>> blocks,
              const InteractionConfig& bc, std::size_t seq_len, bool reversed_first) {
  bool reversed = reversed_first;
  for (const auto& blk : blocks) {
    if (reversed) {
      h = reverse_tokens(interaction_forward(reverse_tokens(h, seq_len), cond_tokens, blk, bc, seq_len),
                         seq_len);
    } else {
      h = interaction_forward(h, cond_tokens, blk, bc, seq_len);
    }
    reversed = !reversed;
  }
  return h;
}

}  // namespace

Var denoise(const DenoiserBatch& batch, Var cond_tokens, const DenoiserWeights<Var>& w,
            const DenoiserConfig& cfg) {
  const std::size_t n = cfg.tokens();
  const std::size_t bsz = batch.batch();
  if (bsz == 0) throw std::invalid_argument("denoise: empty batch");
  if (batch.noisy.shape() != Shape{bsz * n, cfg.latent_channels()}) {
    throw_shape_error("denoise noisy latent", batch.noisy.shape(),
                      Shape{bsz * n, cfg.latent_channels()});
  }
  if (batch.conditioning.shape() != Shape{bsz * n, cfg.cond_channels()}) {
    throw_shape_error("denoise conditioning", batch.conditioning.shape(),
                      Shape{bsz * n, cfg.cond_channels()});
  }
  Tape& tape = cond_tokens.tape();
  const Var inputs[] = {tape.constant(batch.noisy), tape.constant(batch.conditioning)};
  const Var x = concat_cols(inputs);
  Var h = linear(x, w.in_w, w.in_b);

  Var temb = linear(tape.constant(timestep_embedding(batch.timesteps, cfg.time_dim)), w.time_w,
                    w.time_b);
  std::vector<std::size_t> owner(bsz * n);
  for (std::size_t r = 0; r < owner.size(); ++r) owner[r] = r / n;
  h = add(h, gather_rows(temb, owner));

  const std::size_t levels = cfg.levels();
  std::vector<Var> skips;
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    const InteractionConfig bc = cfg.block_config(l);
    const std::size_t g = cfg.grid_at(l);
    h = run_stage(h, cond_tokens, w.down[l], bc, g * g, false);
    skips.push_back(h);
    h = linear(tokens_space_to_depth(h, g), w.down_w[l], w.down_b[l]);
  }
  {
    const InteractionConfig bc = cfg.block_config(levels - 1);
    const std::size_t g = cfg.grid_at(levels - 1);
    h = run_stage(h, cond_tokens, w.mid, bc, g * g, true);
  }
  for (std::size_t l = levels - 1; l-- > 0;) {
    const InteractionConfig bc = cfg.block_config(l);
    const std::size_t g = cfg.grid_at(l);
    h = tokens_depth_to_space(linear(h, w.up_w[l], w.up_b[l]), g);
    const Var parts[] = {h, skips[l]};
    h = linear(concat_cols(parts), w.merge_w[l], w.merge_b[l]);
    h = run_stage(h, cond_tokens, w.up[l], bc, g * g, true);
  }
  return add(linear(normalize(h, w.out_norm), w.out_w, w.out_b), matmul(x, w.out_skip));
}

}  // namespace lcg
