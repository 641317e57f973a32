#include "lcg/interaction.hpp"

#include <cmath>
#include <stdexcept>

namespace lcg {

void InteractionConfig::validate() const {
  gla.validate();
  if (embed_width == 0 || cross_width == 0 || mlp_ratio == 0) {
    throw std::invalid_argument("interaction: embed_width, cross_width and mlp_ratio must be positive");
  }
}

InteractionWeights<Tensor> init_interaction(const InteractionConfig& cfg, Rng& rng,
                                            double out_scale) {
  cfg.validate();
  const std::size_t d = cfg.width();
  const std::size_t hidden = d * cfg.mlp_ratio;
  auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  InteractionWeights<Tensor> w;
  w.gla = init_gla(cfg.gla, rng, out_scale);
  w.norm_self = make_norm(d);
  w.norm_cross = make_norm(d);
  w.norm_mlp = make_norm(d);
  w.cross_q = normal_tensor({d, cfg.cross_width}, fan_in(d), rng);
  w.cross_k = normal_tensor({cfg.embed_width, cfg.cross_width}, fan_in(cfg.embed_width), rng);
  w.cross_v = normal_tensor({cfg.embed_width, cfg.cross_width}, fan_in(cfg.embed_width), rng);
  w.cross_o = normal_tensor({cfg.cross_width, d}, out_scale * fan_in(cfg.cross_width), rng);
  w.mlp_in = normal_tensor({d, hidden}, fan_in(d), rng);
  w.mlp_in_bias = Tensor({hidden});
  w.mlp_out = normal_tensor({hidden, d}, out_scale * fan_in(hidden), rng);
  w.mlp_out_bias = Tensor({d});
  return w;
}

void zero_branch_outputs(InteractionWeights<Tensor>& w) {
  w.gla.w_o.fill(0.0);
  w.cross_o.fill(0.0);
  w.mlp_out.fill(0.0);
  w.mlp_out_bias.fill(0.0);
}

Var self_decode(Var x, const InteractionWeights<Var>& w, const InteractionConfig& cfg,
                std::size_t seq_len) {
  return add(x, gla_attention(normalize(x, w.norm_self, cfg.norm_eps), w.gla, cfg.gla, seq_len));
}

namespace {

Var mlp_branch(Var h, const InteractionWeights<Var>& w, const InteractionConfig& cfg) {
  Var n = normalize(h, w.norm_mlp, cfg.norm_eps);
  return linear(swish(linear(n, w.mlp_in, w.mlp_in_bias)), w.mlp_out, w.mlp_out_bias);
}

// Additive mask keeping each sequence's queries on its own condition tokens.
// exp() of the masked entries underflows to exactly zero.
Tensor block_mask(std::size_t batch, std::size_t seq_len, std::size_t per_sample) {
  constexpr double kMasked = -1e9;
  Tensor mask({batch * seq_len, batch * per_sample}, kMasked);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = b * seq_len; r < (b + 1) * seq_len; ++r)
      for (std::size_t c = b * per_sample; c < (b + 1) * per_sample; ++c) mask.at(r, c) = 0.0;
  return mask;
}

}  // namespace

Var cross_decode(Var h, Var tokens, const InteractionWeights<Var>& w, const InteractionConfig& cfg,
                 std::size_t seq_len) {
  const Tensor& hv = h.value();
  if (hv.rank() != 2 || hv.dim(1) != cfg.width()) {
    throw_shape_error("cross_decode", hv.shape(), Shape{hv.rows(), cfg.width()});
  }
  if (seq_len == 0 || hv.dim(0) % seq_len != 0) {
    throw ShapeError("cross_decode: rows not a whole number of sequences");
  }
  if (!cfg.cross) return add(h, mlp_branch(h, w, cfg));

  const Tensor& ev = tokens.value();
  const std::size_t batch = hv.dim(0) / seq_len;
  if (ev.rank() != 2 || ev.dim(1) != cfg.embed_width) {
    throw_shape_error("cross_decode tokens", ev.shape(), Shape{batch, cfg.embed_width});
  }
  if (ev.dim(0) < batch || ev.dim(0) % batch != 0) {
    throw std::invalid_argument("cross_decode: need at least one condition token per sequence, got " +
                                std::to_string(ev.dim(0)) + " rows for " + std::to_string(batch) +
                                " sequences");
  }
  const std::size_t per_sample = ev.dim(0) / batch;

  Var q = matmul(normalize(h, w.norm_cross, cfg.norm_eps), w.cross_q);
  Var k = matmul(tokens, w.cross_k);
  Var v = matmul(tokens, w.cross_v);
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(cfg.cross_width)));
  if (batch > 1) scores = add(scores, h.tape().constant(block_mask(batch, seq_len, per_sample)));
  Var attended = matmul(matmul(softmax(scores), v), w.cross_o);
  Var h1 = add(h, attended);
  return add(h1, mlp_branch(h1, w, cfg));
}

Var interaction_forward(Var x, Var tokens, const InteractionWeights<Var>& w,
                        const InteractionConfig& cfg, std::size_t seq_len) {
  return cross_decode(self_decode(x, w, cfg, seq_len), tokens, w, cfg, seq_len);
}

}  // namespace lcg
