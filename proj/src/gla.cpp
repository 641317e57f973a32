#include "lcg/gla.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace lcg {

void GlaConfig::validate() const {
  if (width == 0 || key_dim == 0 || value_dim == 0) {
    throw std::invalid_argument("gla: width, key_dim and value_dim must be positive");
  }
  if (heads == 0 || key_dim % heads != 0 || value_dim % heads != 0) {
    throw std::invalid_argument("gla: heads must divide key_dim and value_dim");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("gla: tau must be > 0");
}

GlaWeights<Tensor> init_gla(const GlaConfig& cfg, Rng& rng, double out_scale) {
  cfg.validate();
  const double in_std = 1.0 / std::sqrt(static_cast<double>(cfg.width));
  const double out_std = out_scale / std::sqrt(static_cast<double>(cfg.value_dim));
  GlaWeights<Tensor> w;
  w.w_q = normal_tensor({cfg.width, cfg.key_dim}, in_std, rng);
  w.w_k = normal_tensor({cfg.width, cfg.key_dim}, in_std, rng);
  w.w_v = normal_tensor({cfg.width, cfg.value_dim}, in_std, rng);
  w.w_alpha = normal_tensor({cfg.width, cfg.key_dim}, in_std, rng);
  w.b_alpha = Tensor({cfg.key_dim});
  w.w_beta = normal_tensor({cfg.width, cfg.value_dim}, in_std, rng);
  w.b_beta = Tensor({cfg.value_dim});
  w.w_r = normal_tensor({cfg.width, cfg.value_dim}, in_std, rng);
  w.b_r = Tensor({cfg.value_dim});
  w.w_o = normal_tensor({cfg.value_dim, cfg.width}, out_std, rng);
  return w;
}

GlaProjection gla_project(Var x, const GlaWeights<Var>& w, const GlaConfig& cfg) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != cfg.width) {
    throw_shape_error("gla_project", xv.shape(), Shape{xv.rows(), cfg.width});
  }
  const double inv_tau = 1.0 / cfg.tau;
  GlaProjection p;
  p.q = matmul(x, w.w_q);
  p.k = matmul(x, w.w_k);
  p.v = matmul(x, w.w_v);
  p.alpha = pow(sigmoid(linear(x, w.w_alpha, w.b_alpha)), inv_tau);
  p.beta = pow(sigmoid(linear(x, w.w_beta, w.b_beta)), inv_tau);
  p.r_gate = swish(linear(x, w.w_r, w.b_r));
  return p;
}

namespace {

struct ScanDims {
  std::size_t rows, dk, dv, seq_len, heads, dkh, dvh;
};

ScanDims check_scan_inputs(const Tensor& q, const Tensor& k, const Tensor& v,
                           const Tensor& alpha, const Tensor& beta, std::size_t seq_len,
                           std::size_t heads) {
  if (q.rank() != 2) throw ShapeError("gla_scan: Q must be rank 2, got " + shape_str(q.shape()));
  if (k.shape() != q.shape()) throw_shape_error("gla_scan", q.shape(), k.shape());
  if (alpha.shape() != q.shape()) throw_shape_error("gla_scan", q.shape(), alpha.shape());
  if (v.rank() != 2 || v.dim(0) != q.dim(0)) throw_shape_error("gla_scan", q.shape(), v.shape());
  if (beta.shape() != v.shape()) throw_shape_error("gla_scan", v.shape(), beta.shape());
  ScanDims d{q.dim(0), q.dim(1), v.dim(1), seq_len, heads, 0, 0};
  if (seq_len == 0 || d.rows % seq_len != 0) {
    throw ShapeError("gla_scan: " + std::to_string(d.rows) + " rows is not a whole number of " +
                     std::to_string(seq_len) + "-token sequences");
  }
  if (heads == 0 || d.dk % heads != 0 || d.dv % heads != 0) {
    throw std::invalid_argument("gla_scan: heads must divide key and value widths");
  }
  d.dkh = d.dk / heads;
  d.dvh = d.dv / heads;
  return d;
}

// Forward pass that also returns S_t after every row, for the backward rule.
ScanValues scan_forward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& alpha,
                        const Tensor& beta, const ScanDims& d,
                        const std::optional<GlaState>& initial, std::vector<double>* trace) {
  if (initial && initial->s.shape() != Shape{d.dk, d.dv}) {
    throw_shape_error("gla_scan initial state", initial->s.shape(), Shape{d.dk, d.dv});
  }
  ScanValues out{Tensor({d.rows, d.dv}), {}};
  const std::size_t state_size = d.dk * d.dv;
  if (trace) trace->assign(d.rows * state_size, 0.0);
  std::vector<double> s(state_size);
  for (std::size_t start = 0; start < d.rows; start += d.seq_len) {
    if (initial) {
      std::copy(initial->s.data().begin(), initial->s.data().end(), s.begin());
    } else {
      std::fill(s.begin(), s.end(), 0.0);
    }
    for (std::size_t r = start; r < start + d.seq_len; ++r) {
      const double* qr = &q[r * d.dk];
      const double* kr = &k[r * d.dk];
      const double* ar = &alpha[r * d.dk];
      const double* vr = &v[r * d.dv];
      const double* br = &beta[r * d.dv];
      double* orow = &out.output[r * d.dv];
      for (std::size_t h = 0; h < d.heads; ++h) {
        const std::size_t i0 = h * d.dkh, j0 = h * d.dvh;
        for (std::size_t i = i0; i < i0 + d.dkh; ++i) {
          double* srow = &s[i * d.dv];
          for (std::size_t j = j0; j < j0 + d.dvh; ++j) {
            srow[j] = ar[i] * br[j] * srow[j] + kr[i] * vr[j];
          }
        }
        for (std::size_t j = j0; j < j0 + d.dvh; ++j) {
          double acc = 0.0;
          for (std::size_t i = i0; i < i0 + d.dkh; ++i) acc += qr[i] * s[i * d.dv + j];
          orow[j] = acc;
        }
      }
      if (trace) std::copy(s.begin(), s.end(), trace->begin() + r * state_size);
    }
    out.final_states.push_back(GlaState{Tensor({d.dk, d.dv}, s)});
  }
  return out;
}

}  // namespace

ScanValues gla_recurrence_values(const Tensor& q, const Tensor& k, const Tensor& v,
                                 const Tensor& alpha, const Tensor& beta, std::size_t seq_len,
                                 std::size_t heads, const std::optional<GlaState>& initial) {
  const ScanDims d = check_scan_inputs(q, k, v, alpha, beta, seq_len, heads);
  return scan_forward(q, k, v, alpha, beta, d, initial, nullptr);
}

Var gla_recurrence(const GlaProjection& proj, std::size_t seq_len, std::size_t heads,
                   const std::optional<GlaState>& initial) {
  const ScanDims d = check_scan_inputs(proj.q.value(), proj.k.value(), proj.v.value(),
                                       proj.alpha.value(), proj.beta.value(), seq_len, heads);
  auto trace = std::make_shared<std::vector<double>>();
  ScanValues fwd = scan_forward(proj.q.value(), proj.k.value(), proj.v.value(),
                                proj.alpha.value(), proj.beta.value(), d, initial, trace.get());
  std::vector<double> s0;
  if (initial) s0.assign(initial->s.data().begin(), initial->s.data().end());

  auto backward = [d, trace, s0 = std::move(s0)](const BackwardArgs& g) {
    const Tensor& q = *g.inputs[0];
    const Tensor& k = *g.inputs[1];
    const Tensor& v = *g.inputs[2];
    const Tensor& alpha = *g.inputs[3];
    const Tensor& beta = *g.inputs[4];
    Tensor& dq = g.grad_in[0];
    Tensor& dk = g.grad_in[1];
    Tensor& dv = g.grad_in[2];
    Tensor& da = g.grad_in[3];
    Tensor& db = g.grad_in[4];
    const std::size_t state_size = d.dk * d.dv;
    const std::vector<double> zero(state_size, 0.0);
    std::vector<double> ds(state_size);
    for (std::size_t start = 0; start < d.rows; start += d.seq_len) {
      std::fill(ds.begin(), ds.end(), 0.0);
      for (std::size_t r = start + d.seq_len; r-- > start;) {
        const double* s_now = trace->data() + r * state_size;
        const double* s_prev = r > start ? trace->data() + (r - 1) * state_size
                                         : (s0.empty() ? zero.data() : s0.data());
        const double* go = &g.grad_out[r * d.dv];
        for (std::size_t h = 0; h < d.heads; ++h) {
          const std::size_t i0 = h * d.dkh, j0 = h * d.dvh;
          for (std::size_t i = i0; i < i0 + d.dkh; ++i) {
            double gq = 0.0;
            for (std::size_t j = j0; j < j0 + d.dvh; ++j) {
              gq += go[j] * s_now[i * d.dv + j];
              ds[i * d.dv + j] += q[r * d.dk + i] * go[j];
            }
            if (!dq.empty()) dq[r * d.dk + i] += gq;
          }
          for (std::size_t i = i0; i < i0 + d.dkh; ++i) {
            const double ai = alpha[r * d.dk + i];
            const double ki = k[r * d.dk + i];
            double gk = 0.0, ga = 0.0;
            for (std::size_t j = j0; j < j0 + d.dvh; ++j) {
              const double dsij = ds[i * d.dv + j];
              const double bj = beta[r * d.dv + j];
              const double gate_grad = dsij * s_prev[i * d.dv + j];
              gk += dsij * v[r * d.dv + j];
              ga += gate_grad * bj;
              if (!dv.empty()) dv[r * d.dv + j] += ki * dsij;
              if (!db.empty()) db[r * d.dv + j] += gate_grad * ai;
              ds[i * d.dv + j] = dsij * ai * bj;
            }
            if (!dk.empty()) dk[r * d.dk + i] += gk;
            if (!da.empty()) da[r * d.dk + i] += ga;
          }
        }
      }
    }
  };
  return proj.q.tape().record(std::move(fwd.output),
                              {proj.q, proj.k, proj.v, proj.alpha, proj.beta},
                              std::move(backward));
}

Var gla_scan(const GlaProjection& proj, const GlaWeights<Var>& w, const GlaConfig& cfg,
             std::size_t seq_len, const std::optional<GlaState>& initial) {
  Var o = gla_recurrence(proj, seq_len, cfg.heads, initial);
  return matmul(mul(proj.r_gate, layer_norm(o, cfg.norm_eps)), w.w_o);
}

Var gla_attention(Var x, const GlaWeights<Var>& w, const GlaConfig& cfg, std::size_t seq_len) {
  return gla_scan(gla_project(x, w, cfg), w, cfg, seq_len);
}

Tensor gla_oracle(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& alpha,
                  const Tensor& beta, std::size_t heads) {
  const ScanDims d = check_scan_inputs(q, k, v, alpha, beta, q.rank() == 2 ? q.dim(0) : 1, heads);
  const std::size_t len = d.rows;
  Tensor out({len, d.dv});
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      const std::size_t i0 = h * d.dkh, j0 = h * d.dvh;
      for (std::size_t j = j0; j < j0 + d.dvh; ++j) {
        double acc = 0.0;
        for (std::size_t i = i0; i < i0 + d.dkh; ++i) {
          double inner = 0.0;
          for (std::size_t src = 0; src <= t; ++src) {
            double decay = 1.0;
            for (std::size_t m = src + 1; m <= t; ++m) {
              decay *= alpha[m * d.dk + i] * beta[m * d.dv + j];
            }
            inner += decay * k[src * d.dk + i] * v[src * d.dv + j];
          }
          acc += q[t * d.dk + i] * inner;
        }
        out[t * d.dv + j] = acc;
      }
    }
  }
  return out;
}

}  // namespace lcg
