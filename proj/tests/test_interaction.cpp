#include <doctest.h>

#include <cmath>

#include "lcg/gradcheck.hpp"
#include "lcg/interaction.hpp"
#include "oracles.hpp"

using namespace lcg;

namespace {

InteractionConfig small_config() {
  InteractionConfig cfg;
  cfg.gla = GlaConfig{8, 4, 4, 1, 4.0, 1e-5};
  cfg.embed_width = 6;
  cfg.cross_width = 5;
  return cfg;
}

// Randomizes the norm affines and biases so that no term is trivially zero or one.
InteractionWeights<Tensor> generic_weights(const InteractionConfig& cfg, Rng& rng) {
  InteractionWeights<Tensor> w = init_interaction(cfg, rng);
  for (NormWeights<Tensor>* n : {&w.norm_self, &w.norm_cross, &w.norm_mlp}) {
    n->gamma = uniform_tensor(n->gamma.shape(), 0.5, 1.5, rng);
    n->beta = normal_tensor(n->beta.shape(), 0.3, rng);
  }
  w.gla.b_alpha = normal_tensor(w.gla.b_alpha.shape(), 1.0, rng);
  w.gla.b_r = normal_tensor(w.gla.b_r.shape(), 1.0, rng);
  w.mlp_in_bias = normal_tensor(w.mlp_in_bias.shape(), 0.3, rng);
  w.mlp_out_bias = normal_tensor(w.mlp_out_bias.shape(), 0.3, rng);
  return w;
}

Tensor norm_affine(const Tensor& x, const NormWeights<Tensor>& n) {
  Tensor y = oracle::layer_norm_rows(x, 1e-5);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) = y.at(i, j) * n.gamma[j] + n.beta[j];
  return y;
}

Tensor plus(const Tensor& a, const Tensor& b) {
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

// Whole GLA branch for one sequence from plain loops.
Tensor gla_branch(const Tensor& x, const GlaWeights<Tensor>& w, const GlaConfig& cfg) {
  const auto gate = [&](double z) { return std::pow(oracle::sigmoid(z), 1.0 / cfg.tau); };
  const Tensor o = oracle::gla_unrolled(oracle::matmul(x, w.w_q), oracle::matmul(x, w.w_k),
                                        oracle::matmul(x, w.w_v), oracle::affine(x, w.w_alpha, w.b_alpha, gate),
                                        oracle::affine(x, w.w_beta, w.b_beta, gate));
  const Tensor r = oracle::affine(x, w.w_r, w.b_r, oracle::swish);
  Tensor g = oracle::layer_norm_rows(o, cfg.norm_eps);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= r[i];
  return oracle::matmul(g, w.w_o);
}

Tensor cross_branch(const Tensor& h, const Tensor& e, const InteractionWeights<Tensor>& w,
                    const InteractionConfig& cfg) {
  const Tensor q = oracle::matmul(norm_affine(h, w.norm_cross), w.cross_q);
  const Tensor k = oracle::matmul(e, w.cross_k), v = oracle::matmul(e, w.cross_v);
  Tensor attn({h.rows(), v.cols()});
  for (std::size_t i = 0; i < h.rows(); ++i) {
    std::vector<double> s(e.rows());
    double z = 0.0, mx = -1e300;
    for (std::size_t j = 0; j < e.rows(); ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) d += q.at(i, c) * k.at(j, c);
      s[j] = d / std::sqrt(double(cfg.cross_width));
      mx = std::max(mx, s[j]);
    }
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < e.rows(); ++j)
      for (std::size_t c = 0; c < v.cols(); ++c) attn.at(i, c) += s[j] / z * v.at(j, c);
  }
  return oracle::matmul(attn, w.cross_o);
}

Tensor mlp_branch(const Tensor& h, const InteractionWeights<Tensor>& w) {
  const Tensor hidden = oracle::affine(norm_affine(h, w.norm_mlp), w.mlp_in, w.mlp_in_bias, oracle::swish);
  return oracle::affine(hidden, w.mlp_out, w.mlp_out_bias);
}

Tensor block_oracle(const Tensor& x, const Tensor& e, const InteractionWeights<Tensor>& w,
                    const InteractionConfig& cfg) {
  const Tensor h = plus(x, gla_branch(norm_affine(x, w.norm_self), w.gla, cfg.gla));
  const Tensor h1 = plus(h, cross_branch(h, e, w, cfg));
  return plus(h1, mlp_branch(h1, w));
}

Tensor forward(const Tensor& x, const Tensor& e, const InteractionWeights<Tensor>& w,
               const InteractionConfig& cfg, std::size_t seq) {
  Tape tape;
  return interaction_forward(tape.leaf(x), tape.leaf(e), bind(tape, w), cfg, seq).value();
}

}  // namespace

TEST_CASE("block matches a loop-level recomputation") {
  Rng rng(41);
  const InteractionConfig cfg = small_config();
  const InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  for (std::size_t m : {1, 3}) {
    const Tensor x = normal_tensor({6, 8}, 1.0, rng), e = normal_tensor({m, 6}, 1.0, rng);
    CHECK(oracle::rel_error(forward(x, e, w, cfg, 6), block_oracle(x, e, w, cfg)) <= 1e-12);
  }
}

TEST_CASE("self decode minus input is the standalone GLA on the normalized input") {
  Rng rng(42);
  const InteractionConfig cfg = small_config();
  const InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  const Tensor x = normal_tensor({5, 8}, 1.0, rng);
  Tape tape;
  const InteractionWeights<Var> wv = bind(tape, w);
  Var xv = tape.leaf(x);
  const Tensor out = self_decode(xv, wv, cfg, 5).value();
  const Tensor branch = gla_attention(normalize(xv, wv.norm_self), wv.gla, cfg.gla, 5).value();
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] - x[i] == doctest::Approx(branch[i]).epsilon(1e-12));
}

TEST_CASE("self decode is the identity when W_O is zero") {
  Rng rng(43);
  const InteractionConfig cfg = small_config();
  InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  w.gla.w_o.fill(0.0);
  for (std::size_t len : {1, 4, 16}) {
    const Tensor x = normal_tensor({len, 8}, 1.0, rng);
    Tape tape;
    const Tensor out = self_decode(tape.leaf(x), bind(tape, w), cfg, len).value();
    CHECK(out.shape() == Shape{len, 8});
    CHECK(out == x);
  }
}

TEST_CASE("cross decode is the identity with zero value and MLP output projections") {
  Rng rng(44);
  const InteractionConfig cfg = small_config();
  InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  w.cross_v.fill(0.0);
  w.mlp_out.fill(0.0);
  w.mlp_out_bias.fill(0.0);
  const Tensor h = normal_tensor({4, 8}, 1.0, rng);
  Tape tape;
  CHECK(cross_decode(tape.leaf(h), tape.leaf(normal_tensor({2, 6}, 1.0, rng)), bind(tape, w), cfg, 4).value() ==
        h);
}

TEST_CASE("zeroing all branch outputs makes the block the identity") {
  Rng rng(45);
  const InteractionConfig cfg = small_config();
  InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  zero_branch_outputs(w);
  const Tensor x = normal_tensor({8, 8}, 1.0, rng);
  CHECK(forward(x, normal_tensor({2, 6}, 1.0, rng), w, cfg, 4) == x);
}

TEST_CASE("one token: attention output is its value projection at every position") {
  Rng rng(46);
  InteractionConfig cfg = small_config();
  InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  w.mlp_out.fill(0.0);
  w.mlp_out_bias.fill(0.0);
  const Tensor h = normal_tensor({5, 8}, 1.0, rng), e = normal_tensor({1, 6}, 1.0, rng);
  Tape tape;
  const Tensor out = cross_decode(tape.leaf(h), tape.leaf(e), bind(tape, w), cfg, 5).value();
  const Tensor expected = oracle::matmul(oracle::matmul(e, w.cross_v), w.cross_o);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 8; ++c) CHECK(out.at(i, c) - h.at(i, c) == doctest::Approx(expected.at(0, c)).epsilon(1e-12));
}

TEST_CASE("swapping tokens with equal projections leaves the output unchanged") {
  Rng rng(47);
  const InteractionConfig cfg = small_config();
  InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  // Token component 5 is invisible to both key and value projections.
  for (std::size_t c = 0; c < cfg.cross_width; ++c) w.cross_k.at(5, c) = w.cross_v.at(5, c) = 0.0;
  const Tensor x = normal_tensor({6, 8}, 1.0, rng);
  const Tensor a = normal_tensor({1, 6}, 1.0, rng), b = normal_tensor({1, 6}, 1.0, rng);
  Tensor a2 = a;
  a2[5] += 3.0;
  auto tokens = [](std::initializer_list<const Tensor*> rows) {
    std::vector<double> d;
    for (const Tensor* r : rows) d.insert(d.end(), r->storage().begin(), r->storage().end());
    return Tensor({rows.size(), 6}, d);
  };
  CHECK(forward(x, tokens({&a, &b, &a2}), w, cfg, 6) == forward(x, tokens({&a2, &b, &a}), w, cfg, 6));
  // Distinct tokens: a permutation changes only the summation order.
  CHECK(oracle::max_abs(forward(x, tokens({&a, &b}), w, cfg, 6), forward(x, tokens({&b, &a}), w, cfg, 6)) <= 1e-13);
}

TEST_CASE("sequences attend only to their own token group") {
  Rng rng(48);
  const InteractionConfig cfg = small_config();
  const InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  const Tensor x = normal_tensor({8, 8}, 1.0, rng), e = normal_tensor({4, 6}, 1.0, rng);
  const Tensor both = forward(x, e, w, cfg, 4);
  auto rows = [](const Tensor& t, std::size_t r0, std::size_t n) {
    return Tensor({n, t.cols()}, std::vector<double>(t.storage().begin() + r0 * t.cols(),
                                                      t.storage().begin() + (r0 + n) * t.cols()));
  };
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(oracle::max_abs(rows(both, 4 * s, 4), forward(rows(x, 4 * s, 4), rows(e, 2 * s, 2), w, cfg, 4)) <= 1e-13);
  }
}

TEST_CASE("gradient reaches the condition tokens") {
  Rng rng(49);
  const InteractionConfig cfg = small_config();
  const InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  Tape tape;
  Var e = tape.leaf(normal_tensor({2, 6}, 1.0, rng));
  Var out = interaction_forward(tape.leaf(normal_tensor({4, 8}, 1.0, rng)), e, bind(tape, w), cfg, 4);
  tape.backward(sum(out * tape.constant(normal_tensor({4, 8}, 1.0, rng))));
  double norm = 0.0;
  for (double g : tape.grad(e).storage()) norm += g * g;
  CHECK(norm > 1e-6);
}

TEST_CASE("full block gradient matches finite differences") {
  Rng rng(50);
  const InteractionConfig cfg = small_config();
  const InteractionWeights<Tensor> w = generic_weights(cfg, rng);
  const std::size_t seq = 4;
  std::vector<Tensor> point{normal_tensor({2 * seq, 8}, 1.0, rng), normal_tensor({4, 6}, 1.0, rng)};
  for (Tensor& t : flatten(w)) point.push_back(std::move(t));
  const Tensor probe = normal_tensor({2 * seq, 8}, 1.0, rng);
  GradientCheckOptions opts;
  opts.epsilon = 1e-4;
  opts.fourth_order = true;
  const GradientReport r = check_gradient(
      [&](Tape& tape, std::span<const Var> v) {
        return sum(interaction_forward(v[0], v[1], rebind(w, v.subspan(2)), cfg, seq) * tape.constant(probe));
      },
      point, opts);
  INFO(describe(r));
  CHECK(r.ok);
}

TEST_CASE("foreground and background tokens give different outputs") {
  Rng rng(51);
  const InteractionConfig cfg = small_config();
  const InteractionWeights<Tensor> w = init_interaction(cfg, rng);
  const Tensor x = normal_tensor({6, 8}, 1.0, rng);
  const Tensor fg = normal_tensor({1, 6}, 1.0, rng), bg = normal_tensor({1, 6}, 1.0, rng);
  CHECK(oracle::max_abs(forward(x, fg, w, cfg, 6), forward(x, bg, w, cfg, 6)) > 1e-3);
}

TEST_CASE("disabled cross path skips the tokens") {
  Rng rng(52);
  InteractionConfig cfg = small_config();
  cfg.cross = false;
  const InteractionWeights<Tensor> w = init_interaction(cfg, rng);
  const Tensor x = normal_tensor({4, 8}, 1.0, rng);
  CHECK(forward(x, normal_tensor({1, 6}, 1.0, rng), w, cfg, 4) == forward(x, normal_tensor({1, 6}, 1.0, rng), w, cfg, 4));
}

TEST_CASE("zero condition tokens are rejected") {
  Rng rng(53);
  const InteractionConfig cfg = small_config();
  const InteractionWeights<Tensor> w = init_interaction(cfg, rng);
  Tape tape;
  CHECK_THROWS_AS(Tensor({0, 6}), ShapeError);
  // Two sequences, one token row: the second sequence would have none.
  try {
    (void)cross_decode(tape.leaf(Tensor({8, 8}, 1.0)), tape.leaf(Tensor({1, 6})), bind(tape, w), cfg, 4);
    FAIL("accepted a sequence without condition tokens");
  } catch (const ShapeError&) {
    FAIL("wrong error type");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("condition token") != std::string::npos);
  }
  CHECK_THROWS_AS(cross_decode(tape.leaf(Tensor({4, 7}, 1.0)), tape.leaf(Tensor({1, 6})), bind(tape, w), cfg, 4),
                  ShapeError);
}
