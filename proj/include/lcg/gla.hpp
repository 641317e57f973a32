#pragma once

#include <optional>

#include "lcg/autodiff.hpp"
#include "lcg/params.hpp"
#include "lcg/random.hpp"

namespace lcg {

/// Gated linear attention with a 2-D forget gate G_t = α_tᵀβ_t.
///
/// Tokens are row vectors: Q_t is 1×d_k, S_t is d_k×d_v, so O_t = Q_t·S_t.
/// With `heads` > 1 the key and value widths are split evenly and each head
/// keeps its own diagonal block of S.
struct GlaConfig {
  std::size_t width = 0;      // d
  std::size_t key_dim = 0;    // d_k
  std::size_t value_dim = 0;  // d_v
  std::size_t heads = 1;
  double tau = 16.0;
  double norm_eps = 1e-5;

  void validate() const;
};

template <class T>
struct GlaWeights {
  T w_q, w_k, w_v;
  T w_alpha, b_alpha;
  T w_beta, b_beta;
  T w_r, b_r;
  T w_o;
};

template <class F, InstanceOf<GlaWeights> W0, class... W>
void visit_params(const std::string& p, F&& f, W0&& w0, W&&... w) {
  f(p + "w_q", w0.w_q, w.w_q...);
  f(p + "w_k", w0.w_k, w.w_k...);
  f(p + "w_v", w0.w_v, w.w_v...);
  f(p + "w_alpha", w0.w_alpha, w.w_alpha...);
  f(p + "b_alpha", w0.b_alpha, w.b_alpha...);
  f(p + "w_beta", w0.w_beta, w.w_beta...);
  f(p + "b_beta", w0.b_beta, w.b_beta...);
  f(p + "w_r", w0.w_r, w.w_r...);
  f(p + "b_r", w0.b_r, w.b_r...);
  f(p + "w_o", w0.w_o, w.w_o...);
}

/// Gaussian fan-in initialization; the output projection is scaled by `out_scale`.
GlaWeights<Tensor> init_gla(const GlaConfig& cfg, Rng& rng, double out_scale = 1.0);

struct GlaProjection {
  Var q, k, v;
  Var alpha, beta;  // forget-gate factors in (0, 1]
  Var r_gate;       // Swish output gate
};

/// Q, K, V projections, sigmoid gates sharpened by 1/τ, and the output gate.
GlaProjection gla_project(Var x, const GlaWeights<Var>& w, const GlaConfig& cfg);

/// Running state, d_k×d_v. Zero unless resuming a sequence.
struct GlaState {
  Tensor s;
  static GlaState zero(const GlaConfig& cfg) { return {Tensor({cfg.key_dim, cfg.value_dim})}; }
};

struct ScanValues {
  Tensor output;             // rows×d_v, the O_t rows
  std::vector<GlaState> final_states;  // one per sequence
};

/// Sequential recurrence S_t = G_t ⊙ S_{t−1} + K_tᵀV_t, O_t = Q_t·S_t.
/// Rows are `rows / seq_len` independent sequences stacked back to back.
ScanValues gla_recurrence_values(const Tensor& q, const Tensor& k, const Tensor& v,
                                 const Tensor& alpha, const Tensor& beta, std::size_t seq_len,
                                 std::size_t heads = 1,
                                 const std::optional<GlaState>& initial = std::nullopt);

/// Differentiable form of gla_recurrence_values with a reverse-time backward rule.
Var gla_recurrence(const GlaProjection& proj, std::size_t seq_len, std::size_t heads = 1,
                   const std::optional<GlaState>& initial = std::nullopt);

/// Full self-decoding output (R ⊙ LayerNorm(O))·W_O, rows×d.
Var gla_scan(const GlaProjection& proj, const GlaWeights<Var>& w, const GlaConfig& cfg,
             std::size_t seq_len, const std::optional<GlaState>& initial = std::nullopt);

/// project + scan.
Var gla_attention(Var x, const GlaWeights<Var>& w, const GlaConfig& cfg, std::size_t seq_len);

/// Brute-force unrolled recurrence for one sequence:
/// O_t = Q_t · Σ_{j≤t} (⊙∏_{k=j+1..t} G_k) ⊙ K_jᵀV_j. O(L²·d_k·d_v).
Tensor gla_oracle(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& alpha,
                  const Tensor& beta, std::size_t heads = 1);

}  // namespace lcg
