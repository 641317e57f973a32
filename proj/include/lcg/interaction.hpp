#pragma once

#include "lcg/gla.hpp"

namespace lcg {

// One latent/embedding interaction: pre-norm GLA self-decoding with a residual,
// then pre-norm softmax cross-attention against the condition tokens and a
// pre-norm Swish MLP, each wrapped in its own residual.

struct InteractionConfig {
  GlaConfig gla;
  std::size_t embed_width = 0;  // condition token width after up-projection
  std::size_t cross_width = 0;  // query/key/value width of the cross path
  std::size_t mlp_ratio = 4;
  bool cross = true;  // false: self-decoding and MLP only
  double norm_eps = 1e-5;

  std::size_t width() const { return gla.width; }
  void validate() const;
};

template <class T>
struct InteractionWeights {
  GlaWeights<T> gla;
  NormWeights<T> norm_self, norm_cross, norm_mlp;
  T cross_q, cross_k, cross_v, cross_o;
  T mlp_in, mlp_in_bias, mlp_out, mlp_out_bias;
};

template <class F, InstanceOf<InteractionWeights> W0, class... W>
void visit_params(const std::string& p, F&& f, W0&& w0, W&&... w) {
  visit_params(p + "gla.", f, w0.gla, w.gla...);
  visit_params(p + "norm_self.", f, w0.norm_self, w.norm_self...);
  visit_params(p + "norm_cross.", f, w0.norm_cross, w.norm_cross...);
  visit_params(p + "norm_mlp.", f, w0.norm_mlp, w.norm_mlp...);
  f(p + "cross_q", w0.cross_q, w.cross_q...);
  f(p + "cross_k", w0.cross_k, w.cross_k...);
  f(p + "cross_v", w0.cross_v, w.cross_v...);
  f(p + "cross_o", w0.cross_o, w.cross_o...);
  f(p + "mlp_in", w0.mlp_in, w.mlp_in...);
  f(p + "mlp_in_bias", w0.mlp_in_bias, w.mlp_in_bias...);
  f(p + "mlp_out", w0.mlp_out, w.mlp_out...);
  f(p + "mlp_out_bias", w0.mlp_out_bias, w.mlp_out_bias...);
}

/// `out_scale` multiplies the init std of every residual-branch output projection.
InteractionWeights<Tensor> init_interaction(const InteractionConfig& cfg, Rng& rng,
                                            double out_scale = 1.0);

/// Zeroes W_O, cross_o and the MLP output projection and bias, so the block is the identity.
void zero_branch_outputs(InteractionWeights<Tensor>& w);

/// x + GLA(norm(x)). Rows of `x` are whole sequences of `seq_len` tokens.
Var self_decode(Var x, const InteractionWeights<Var>& w, const InteractionConfig& cfg,
                std::size_t seq_len);

/// h + CrossAttn(norm(h), E), then + MLP(norm(·)). `tokens` holds `rows(h)/seq_len`
/// groups of m ≥ 1 condition rows; each sequence attends only to its own group.
Var cross_decode(Var h, Var tokens, const InteractionWeights<Var>& w, const InteractionConfig& cfg,
                 std::size_t seq_len);

Var interaction_forward(Var x, Var tokens, const InteractionWeights<Var>& w,
                        const InteractionConfig& cfg, std::size_t seq_len);

}  // namespace lcg
