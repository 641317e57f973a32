#include <doctest.h>

#include <cmath>

#include "lcg/gla.hpp"
#include "lcg/gradcheck.hpp"
#include "oracles.hpp"

using namespace lcg;

namespace {

struct Inputs {
  Tensor q, k, v, alpha, beta;
};

Inputs random_inputs(std::size_t len, std::size_t dk, std::size_t dv, Rng& rng) {
  return {normal_tensor({len, dk}, 1.0, rng), normal_tensor({len, dk}, 1.0, rng),
          normal_tensor({len, dv}, 1.0, rng), uniform_tensor({len, dk}, 0.05, 1.0, rng),
          uniform_tensor({len, dv}, 0.05, 1.0, rng)};
}

Tensor scan(const Inputs& in) {
  return gla_recurrence_values(in.q, in.k, in.v, in.alpha, in.beta, in.q.rows()).output;
}

GlaConfig small_config() { return GlaConfig{8, 4, 4, 1, 16.0, 1e-5}; }

}  // namespace

TEST_CASE("projections match plain matrix products") {
  Rng rng(21);
  const GlaConfig cfg = small_config();
  GlaWeights<Tensor> w = init_gla(cfg, rng);
  w.b_alpha = normal_tensor({4}, 1.0, rng);
  w.b_beta = normal_tensor({4}, 1.0, rng);
  w.b_r = normal_tensor({4}, 1.0, rng);
  const Tensor x = normal_tensor({4, 8}, 1.0, rng);
  Tape tape;
  const GlaProjection p = gla_project(tape.leaf(x), bind(tape, w), cfg);
  const auto root_tau = [&](double z) { return std::pow(oracle::sigmoid(z), 1.0 / cfg.tau); };
  CHECK(oracle::max_abs(p.q.value(), oracle::matmul(x, w.w_q)) <= 1e-14);
  CHECK(oracle::max_abs(p.k.value(), oracle::matmul(x, w.w_k)) <= 1e-14);
  CHECK(oracle::max_abs(p.v.value(), oracle::matmul(x, w.w_v)) <= 1e-14);
  CHECK(oracle::max_abs(p.alpha.value(), oracle::affine(x, w.w_alpha, w.b_alpha, root_tau)) <= 1e-14);
  CHECK(oracle::max_abs(p.beta.value(), oracle::affine(x, w.w_beta, w.b_beta, root_tau)) <= 1e-14);
  CHECK(oracle::max_abs(p.r_gate.value(), oracle::affine(x, w.w_r, w.b_r, oracle::swish)) <= 1e-14);
}

TEST_CASE("zero gate weights give alpha = 0.5^(1/tau)") {
  Rng rng(22);
  for (double tau : {1.0, 4.0, 16.0}) {
    GlaConfig cfg = small_config();
    cfg.tau = tau;
    GlaWeights<Tensor> w = init_gla(cfg, rng);
    w.w_alpha.fill(0.0);
    Tape tape;
    const GlaProjection p = gla_project(tape.leaf(normal_tensor({3, 8}, 1.0, rng)), bind(tape, w), cfg);
    for (double a : p.alpha.value().storage()) CHECK(a == doctest::Approx(std::pow(0.5, 1.0 / tau)).epsilon(1e-15));
  }
}

TEST_CASE("gates approach one as tau grows") {
  Rng rng(23);
  GlaConfig cfg = small_config();
  cfg.tau = 1e12;
  const GlaWeights<Tensor> w = init_gla(cfg, rng);
  Tape tape;
  const GlaProjection p = gla_project(tape.leaf(normal_tensor({3, 8}, 3.0, rng)), bind(tape, w), cfg);
  for (double a : p.alpha.value().storage()) CHECK(std::abs(a - 1.0) < 1e-10);
  for (double b : p.beta.value().storage()) CHECK(std::abs(b - 1.0) < 1e-10);
}

TEST_CASE("unit gates give cumulative linear attention") {
  Rng rng(24);
  Inputs in = random_inputs(6, 3, 5, rng);
  in.alpha.fill(1.0);
  in.beta.fill(1.0);
  const Tensor out = scan(in);
  for (std::size_t t = 0; t < 6; ++t) {
    Tensor state({3, 5});
    for (std::size_t j = 0; j <= t; ++j)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 5; ++b) state.at(a, b) += in.k.at(j, a) * in.v.at(j, b);
    for (std::size_t b = 0; b < 5; ++b) {
      double o = 0.0;
      for (std::size_t a = 0; a < 3; ++a) o += in.q.at(t, a) * state.at(a, b);
      CHECK(std::abs(out.at(t, b) - o) <= 1e-12);
    }
  }
}

TEST_CASE("zero gates give purely local attention") {
  Rng rng(25);
  Inputs in = random_inputs(5, 4, 2, rng);
  in.alpha.fill(0.0);
  in.beta.fill(0.0);
  const Tensor out = scan(in);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t b = 0; b < 2; ++b) {
      double qk = 0.0;
      for (std::size_t a = 0; a < 4; ++a) qk += in.q.at(t, a) * in.k.at(t, a);
      CHECK(std::abs(out.at(t, b) - qk * in.v.at(t, b)) <= 1e-12);
    }
}

TEST_CASE("single token ignores gates") {
  Rng rng(26);
  const Inputs in = random_inputs(1, 3, 3, rng);
  const Tensor out = scan(in);
  const Tensor lib = gla_oracle(in.q, in.k, in.v, in.alpha, in.beta);
  for (std::size_t b = 0; b < 3; ++b) {
    double o = 0.0;
    for (std::size_t a = 0; a < 3; ++a) o += in.q.at(0, a) * in.k.at(0, a) * in.v.at(0, b);
    CHECK(out.at(0, b) == doctest::Approx(o).epsilon(1e-14));
    CHECK(lib.at(0, b) == doctest::Approx(o).epsilon(1e-14));
  }
}

TEST_CASE("two tokens with half gates") {
  Rng rng(27);
  Inputs in = random_inputs(2, 3, 2, rng);
  // G = αᵀβ = 0.5 everywhere.
  in.alpha.fill(std::sqrt(0.5));
  in.beta.fill(std::sqrt(0.5));
  const Tensor out = scan(in);
  for (std::size_t b = 0; b < 2; ++b) {
    double o = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      o += in.q.at(1, a) * (0.5 * in.k.at(0, a) * in.v.at(0, b) + in.k.at(1, a) * in.v.at(1, b));
    }
    CHECK(out.at(1, b) == doctest::Approx(o).epsilon(1e-13));
  }
}

TEST_CASE("scan matches the unrolled expansion on 100 random instances") {
  Rng rng(28);
  double worst_scan = 0.0, worst_lib = 0.0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t len = 1 + rng() % 16, dk = 1 + rng() % 8, dv = 1 + rng() % 8;
    const Inputs in = random_inputs(len, dk, dv, rng);
    const Tensor truth = oracle::gla_unrolled(in.q, in.k, in.v, in.alpha, in.beta);
    worst_scan = std::max(worst_scan, oracle::rel_error(scan(in), truth));
    worst_lib = std::max(worst_lib, oracle::rel_error(gla_oracle(in.q, in.k, in.v, in.alpha, in.beta), truth));
  }
  CHECK(worst_scan <= 1e-10);
  CHECK(worst_lib <= 1e-10);
}

TEST_CASE("multi-head scan keeps per-head blocks") {
  Rng rng(29);
  const Inputs in = random_inputs(7, 4, 6, rng);
  const Tensor out = gla_recurrence_values(in.q, in.k, in.v, in.alpha, in.beta, 7, 2).output;
  auto cols = [](const Tensor& t, std::size_t c0, std::size_t n) {
    Tensor o({t.rows(), n});
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < n; ++c) o.at(r, c) = t.at(r, c0 + c);
    return o;
  };
  for (std::size_t h = 0; h < 2; ++h) {
    const Tensor head = oracle::gla_unrolled(cols(in.q, 2 * h, 2), cols(in.k, 2 * h, 2), cols(in.v, 3 * h, 3),
                                             cols(in.alpha, 2 * h, 2), cols(in.beta, 3 * h, 3));
    CHECK(oracle::rel_error(cols(out, 3 * h, 3), head) <= 1e-12);
  }
  CHECK(oracle::rel_error(gla_oracle(in.q, in.k, in.v, in.alpha, in.beta, 2), out) <= 1e-12);
}

TEST_CASE("stacked sequences are independent") {
  Rng rng(30);
  const Inputs a = random_inputs(5, 3, 3, rng), b = random_inputs(5, 3, 3, rng);
  auto stack = [](const Tensor& x, const Tensor& y) {
    std::vector<double> d(x.storage());
    d.insert(d.end(), y.storage().begin(), y.storage().end());
    return Tensor({x.rows() + y.rows(), x.cols()}, d);
  };
  const Tensor both = gla_recurrence_values(stack(a.q, b.q), stack(a.k, b.k), stack(a.v, b.v),
                                            stack(a.alpha, b.alpha), stack(a.beta, b.beta), 5)
                          .output;
  CHECK(both == stack(scan(a), scan(b)));
}

TEST_CASE("output at t ignores later tokens") {
  Rng rng(31);
  const GlaConfig cfg = small_config();
  const GlaWeights<Tensor> w = init_gla(cfg, rng);
  Tensor x = normal_tensor({8, 8}, 1.0, rng);
  auto run = [&](const Tensor& in) {
    Tape tape;
    return gla_attention(tape.leaf(in), bind(tape, w), cfg, 8).value();
  };
  const Tensor before = run(x);
  for (std::size_t c = 0; c < 8; ++c) x.at(5, c) += 1.0;
  const Tensor after = run(x);
  for (std::size_t t = 0; t < 8; ++t) {
    bool same = true;
    for (std::size_t c = 0; c < 8; ++c) same &= before.at(t, c) == after.at(t, c);
    CHECK(same == (t < 5));
  }
}

TEST_CASE("scalar gate g weights token j by g^(t-j)") {
  Rng rng(32);
  const double g = 0.7;
  Inputs in = random_inputs(6, 2, 2, rng);
  in.alpha.fill(std::sqrt(g));
  in.beta.fill(std::sqrt(g));
  // Contribution of token j: scan with only K_j nonzero.
  for (std::size_t j = 0; j < 6; ++j) {
    Inputs only = in;
    for (std::size_t r = 0; r < 6; ++r)
      if (r != j) only.k.at(r, 0) = only.k.at(r, 1) = 0.0;
    const Tensor part = scan(only);
    for (std::size_t t = j; t < 6; ++t)
      for (std::size_t b = 0; b < 2; ++b) {
        double local = 0.0;
        for (std::size_t a = 0; a < 2; ++a) local += in.q.at(t, a) * in.k.at(j, a) * in.v.at(j, b);
        CHECK(part.at(t, b) == doctest::Approx(std::pow(g, double(t - j)) * local).epsilon(1e-12));
      }
  }
}

TEST_CASE("resuming from a carried state equals one long scan") {
  Rng rng(33);
  const Inputs in = random_inputs(6, 3, 2, rng);
  const ScanValues whole = gla_recurrence_values(in.q, in.k, in.v, in.alpha, in.beta, 6);
  auto rows = [](const Tensor& t, std::size_t r0, std::size_t n) {
    return Tensor({n, t.cols()}, std::vector<double>(t.storage().begin() + r0 * t.cols(),
                                                      t.storage().begin() + (r0 + n) * t.cols()));
  };
  const ScanValues head = gla_recurrence_values(rows(in.q, 0, 4), rows(in.k, 0, 4), rows(in.v, 0, 4),
                                                rows(in.alpha, 0, 4), rows(in.beta, 0, 4), 4);
  const ScanValues tail = gla_recurrence_values(rows(in.q, 4, 2), rows(in.k, 4, 2), rows(in.v, 4, 2),
                                                rows(in.alpha, 4, 2), rows(in.beta, 4, 2), 2, 1,
                                                head.final_states[0]);
  CHECK(oracle::max_abs(tail.output, rows(whole.output, 4, 2)) <= 1e-13);
}

TEST_CASE("full GLA gradients match finite differences") {
  Rng rng(34);
  const GlaConfig cfg{6, 4, 3, 1, 4.0, 1e-5};
  const GlaWeights<Tensor> w = init_gla(cfg, rng);
  const std::size_t seq = 5;
  std::vector<Tensor> point{normal_tensor({2 * seq, 6}, 1.0, rng)};
  for (Tensor& t : flatten(w)) point.push_back(std::move(t));
  const Tensor probe = normal_tensor({2 * seq, 6}, 1.0, rng);
  GradientCheckOptions opts;
  opts.epsilon = 1e-4;
  opts.fourth_order = true;
  const GradientReport r = check_gradient(
      [&](Tape& tape, std::span<const Var> v) {
        return sum(gla_attention(v[0], rebind(w, v.subspan(1)), cfg, seq) * tape.constant(probe));
      },
      point, opts);
  INFO(describe(r));
  CHECK(r.ok);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("recurrence gradient against test-side differences") {
  Rng rng(35);
  const Inputs in = random_inputs(7, 3, 4, rng);
  const Tensor probe = normal_tensor({7, 4}, 1.0, rng);
  auto value = [&](const std::vector<Tensor>& p) {
    const Tensor o = gla_recurrence_values(p[0], p[1], p[2], p[3], p[4], 7).output;
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * probe[i];
    return s;
  };
  const std::vector<Tensor> point{in.q, in.k, in.v, in.alpha, in.beta};
  Tape tape;
  GlaProjection p;
  p.q = tape.leaf(in.q);
  p.k = tape.leaf(in.k);
  p.v = tape.leaf(in.v);
  p.alpha = tape.leaf(in.alpha);
  p.beta = tape.leaf(in.beta);
  tape.backward(sum(gla_recurrence(p, 7) * tape.constant(probe)));
  const std::vector<Tensor> analytic{tape.grad(p.q), tape.grad(p.k), tape.grad(p.v), tape.grad(p.alpha),
                                     tape.grad(p.beta)};
  CHECK(oracle::gradient_rel_error(analytic, oracle::numeric_gradient(value, point, 1e-5)) <= 1e-6);
}

TEST_CASE("shape errors") {
  Rng rng(36);
  const GlaConfig cfg = small_config();
  const GlaWeights<Tensor> w = init_gla(cfg, rng);
  Tape tape;
  CHECK_THROWS_AS(gla_project(tape.leaf(Tensor({3, 7})), bind(tape, w), cfg), ShapeError);
  const Inputs in = random_inputs(4, 2, 2, rng);
  CHECK_THROWS_AS(gla_recurrence_values(in.q, in.k, Tensor({3, 2}), in.alpha, in.beta, 4), ShapeError);
  CHECK_THROWS_AS(gla_recurrence_values(in.q, in.k, in.v, in.alpha, in.beta, 3), ShapeError);
  CHECK_THROWS(GlaConfig{8, 4, 4, 1, 0.0, 1e-5}.validate());
  CHECK_THROWS(GlaConfig{8, 4, 3, 2, 1.0, 1e-5}.validate());
}
