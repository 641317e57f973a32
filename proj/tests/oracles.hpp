#pragma once

// Reference computations written directly from the defining formulas, with
// plain loops and no library math beyond Tensor storage.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lcg/tensor.hpp"

namespace oracle {

using lcg::Tensor;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double swish(double x) { return x * sigmoid(x); }

/// Row-wise x·W + b followed by an elementwise map.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b,
                     const std::function<double(double)>& f = [](double v) { return v; }) {
  Tensor out = oracle::matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) = f(out.at(i, j) + (b.size() ? b[j] : 0.0));
  return out;
}

inline Tensor layer_norm_rows(const Tensor& x, double eps) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) mean += x.at(i, j);
    mean /= static_cast<double>(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
    var /= static_cast<double>(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = (x.at(i, j) - mean) / std::sqrt(var + eps);
  }
  return out;
}

/// O_t = Q_t · Σ_{j≤t} (∏_{k=j+1..t} α_kᵀβ_k) ⊙ K_jᵀV_j, every product expanded.
inline Tensor gla_unrolled(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& alpha,
                           const Tensor& beta) {
  const std::size_t len = q.rows(), dk = q.cols(), dv = v.cols();
  Tensor out({len, dv});
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < dv; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= t; ++j)
        for (std::size_t r = 0; r < dk; ++r) {
          double gate = 1.0;
          for (std::size_t s = j + 1; s <= t; ++s) gate *= alpha.at(s, r) * beta.at(s, c);
          acc += q.at(t, r) * gate * k.at(j, r) * v.at(j, c);
        }
      out.at(t, c) = acc;
    }
  return out;
}

/// max|a − b| / max|b|.
inline double rel_error(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0 ? num / den : num;
}

inline double max_abs(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Central differences of a scalar function of several tensors, coordinate by coordinate.
/// `five_point` selects the O(h⁴) stencil.
inline std::vector<Tensor> numeric_gradient(const std::function<double(const std::vector<Tensor>&)>& f,
                                            std::vector<Tensor> point, double h,
                                            bool five_point = false) {
  std::vector<Tensor> grads;
  for (std::size_t k = 0; k < point.size(); ++k) {
    Tensor g(point[k].shape());
    for (std::size_t i = 0; i < point[k].size(); ++i) {
      const double x = point[k][i];
      auto at = [&](double d) {
        point[k][i] = x + d;
        const double v = f(point);
        point[k][i] = x;
        return v;
      };
      double d1 = (at(h) - at(-h)) / (2 * h);
      if (five_point) d1 = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
      g[i] = d1;
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// Largest |a − n| / max(|a|, |n|, floor) over all coordinates.
inline double gradient_rel_error(const std::vector<Tensor>& analytic, const std::vector<Tensor>& numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k)
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      const double a = analytic[k][i], n = numeric[k][i];
      worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
    }
  return worst;
}

}  // namespace oracle
