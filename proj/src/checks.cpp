#include "lcg/checks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lcg/codec.hpp"
#include "lcg/data_forge.hpp"
#include "lcg/diffusion.hpp"
#include "lcg/gradcheck.hpp"
#include "lcg/interaction.hpp"

namespace lcg {

namespace {

constexpr std::array<std::string_view, 4> kSuites{"gla", "grad", "mask", "codec"};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double rel_error(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-300);
}

std::vector<CheckResult> gla_suite() {
  std::vector<CheckResult> out;
  Rng rng(11);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t len = 1 + rng() % 16, dk = 1 + rng() % 8, dv = 1 + rng() % 8;
    const Tensor q = normal_tensor({len, dk}, 1.0, rng), k = normal_tensor({len, dk}, 1.0, rng);
    const Tensor v = normal_tensor({len, dv}, 1.0, rng);
    const Tensor a = uniform_tensor({len, dk}, 0.05, 1.0, rng);
    const Tensor b = uniform_tensor({len, dv}, 0.05, 1.0, rng);
    const ScanValues scan = gla_recurrence_values(q, k, v, a, b, len);
    worst = std::max(worst, rel_error(scan.output, gla_oracle(q, k, v, a, b)));
  }
  out.push_back({"gla.scan_vs_oracle", worst <= 1e-10, "100 instances, max rel err " + sci(worst)});

  const std::size_t len = 6, dk = 3, dv = 4;
  const Tensor q = normal_tensor({len, dk}, 1.0, rng), k = normal_tensor({len, dk}, 1.0, rng);
  const Tensor v = normal_tensor({len, dv}, 1.0, rng);
  double cum = 0.0, local = 0.0;
  const Tensor ones_a({len, dk}, 1.0), ones_b({len, dv}, 1.0);
  const Tensor zero_a({len, dk}, 0.0), zero_b({len, dv}, 0.0);
  const Tensor o1 = gla_recurrence_values(q, k, v, ones_a, ones_b, len).output;
  const Tensor o0 = gla_recurrence_values(q, k, v, zero_a, zero_b, len).output;
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < dv; ++c) {
      double acc = 0.0, loc = 0.0;
      for (std::size_t j = 0; j <= t; ++j) {
        double qk = 0.0;
        for (std::size_t i = 0; i < dk; ++i) qk += q.at(t, i) * k.at(j, i);
        acc += qk * v.at(j, c);
        if (j == t) loc = qk * v.at(j, c);
      }
      cum = std::max(cum, std::abs(o1.at(t, c) - acc));
      local = std::max(local, std::abs(o0.at(t, c) - loc));
    }
  }
  out.push_back({"gla.gates_one", cum <= 1e-12, "max abs err " + sci(cum)});
  out.push_back({"gla.gates_zero", local <= 1e-12, "max abs err " + sci(local)});
  return out;
}

CheckResult grad_result(const std::string& name, const GradientReport& r) {
  return {name, r.ok, describe(r)};
}

std::vector<CheckResult> grad_suite() {
  std::vector<CheckResult> out;
  Rng rng(12);
  GradientCheckOptions opts;
  opts.epsilon = 1e-4;
  opts.tolerance = 1e-4;
  opts.fourth_order = true;

  InteractionConfig ic;
  ic.gla = GlaConfig{8, 4, 4, 1, 4.0, 1e-5};
  ic.embed_width = 6;
  ic.cross_width = 8;
  const std::size_t seq = 4, seqs = 2, m = 2;
  const InteractionWeights<Tensor> iw = init_interaction(ic, rng);
  std::vector<Tensor> point{normal_tensor({seq * seqs, 8}, 1.0, rng),
                            normal_tensor({seqs * m, 6}, 1.0, rng)};
  for (Tensor& t : flatten(iw)) point.push_back(std::move(t));
  const Tensor probe = normal_tensor({seq * seqs, 8}, 1.0, rng);
  auto block_loss = [&](Tape& tape, std::span<const Var> vars) {
    const InteractionWeights<Var> w = rebind(iw, vars.subspan(2));
    return sum(interaction_forward(vars[0], vars[1], w, ic, seq) * tape.constant(probe));
  };
  out.push_back(grad_result("grad.interaction_block", check_gradient(block_loss, point, opts)));

  ModelConfig mc;
  mc.denoiser.image_size = 8;
  mc.denoiser.factor = 2;
  mc.denoiser.widths = {8, 16};
  mc.denoiser.blocks = {1, 1};
  mc.denoiser.cross = {true, true};
  mc.denoiser.time_dim = 4;
  mc.denoiser.embed_width = 4;
  mc.lcg.embed_dim = 3;
  mc.lcg.token_width = 4;
  const ModelWeights<Tensor> mw = init_model(mc, 13);
  const std::size_t n = mc.denoiser.tokens();
  DenoiserBatch batch;
  batch.noisy = normal_tensor({2 * n, mc.denoiser.latent_channels()}, 1.0, rng);
  batch.conditioning = uniform_tensor({2 * n, mc.denoiser.cond_channels()}, -1.0, 1.0, rng);
  batch.timesteps = {17, 640};
  const Tensor eps = normal_tensor({2 * n, mc.denoiser.latent_channels()}, 1.0, rng);
  const std::array categories{Category::Foreground, Category::Background};
  auto model_loss = [&](Tape&, std::span<const Var> vars) {
    return epsilon_mse(predict_noise(batch, categories, rebind(mw, vars), mc), eps);
  };
  const std::vector<Tensor> params = flatten(mw);
  out.push_back(grad_result("grad.tiny_denoiser", check_gradient(model_loss, params, opts)));
  return out;
}

CheckResult frequency(const std::string& name, std::size_t hits, std::size_t n, double p, double tol) {
  const double f = static_cast<double>(hits) / static_cast<double>(n);
  return {name, std::abs(f - p) <= tol, "frequency " + std::to_string(f) + " vs " + std::to_string(p)};
}

std::vector<CheckResult> mask_suite() {
  std::vector<CheckResult> out;
  const std::size_t side = 8;
  BinaryMask scene(side, side), brush(side, side), obj(side, side);
  scene.set(0, true);
  brush.set(1, true);
  obj.set(2, true);
  Rng rng(14);
  std::size_t with_brush = 0, with_obj = 0;
  const std::size_t draws = 10000;
  for (std::size_t i = 0; i < draws; ++i) {
    const ComposedMask c = compose_background_mask(scene, brush, obj, {}, rng);
    with_brush += c.mask[1];
    with_obj += c.mask[2];
  }
  out.push_back(frequency("mask.p_rand_frequency", with_brush, draws, 0.5, 0.015));
  out.push_back(frequency("mask.p_obj_frequency", with_obj, draws, 0.5, 0.015));

  BinaryMask all = scene;
  all |= brush;
  all |= obj;
  bool zero_ok = true, one_ok = true;
  for (int i = 0; i < 200; ++i) {
    zero_ok &= compose_background_mask(scene, brush, obj, {0.0, 0.0}, rng).mask == scene;
    one_ok &= compose_background_mask(scene, brush, obj, {1.0, 1.0}, rng).mask == all;
  }
  out.push_back({"mask.p_zero_is_scene", zero_ok, "200 draws"});
  out.push_back({"mask.p_one_is_union", one_ok, "200 draws"});

  std::size_t dropped = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    dropped += drop_condition(Category::Foreground, 0.1, rng) == Category::Null;
  }
  out.push_back(frequency("mask.drop_frequency", dropped, draws, 0.1, 0.009));

  SceneConfig sc;
  std::vector<Scene> scenes;
  for (std::uint64_t s = 0; s < 40; ++s) scenes.push_back(gen_scene(derive_seed(15, s), sc));
  const auto samples = build_pairs(scenes, PairConfig{}, 200, rng);
  const ScanReport scan = scan_samples(samples, 0.02, 0.9);
  out.push_back({"mask.dataset_scan", scan.ok(),
                 std::to_string(scan.checked) + " samples, " + std::to_string(scan.violations.size()) +
                     " violations"});
  return out;
}

std::vector<CheckResult> codec_suite() {
  std::vector<CheckResult> out;
  Rng rng(16);
  std::uniform_int_distribution<int> level(0, 255);
  std::bernoulli_distribution coin(0.4);
  bool roundtrip = true, preserved = true;
  for (int n = 0; n < 200; ++n) {
    Image im(32, 32, 3);
    for (double& p : im.pixels) p = level(rng) / 255.0;
    roundtrip &= decode_output(space_to_depth(im, 4), 3, 4) == im;
    BinaryMask mask(32, 32);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.set(i, coin(rng));
    Image gen(32, 32, 3);
    for (double& p : gen.pixels) p = level(rng) / 255.0;
    const Image comp = composite(im, gen, mask);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double want = mask[i] ? gen.pixels[i * 3 + c] : im.pixels[i * 3 + c];
        preserved &= comp.pixels[i * 3 + c] == want;
      }
    }
  }
  out.push_back({"codec.roundtrip", roundtrip, "200 random 32x32 images, f=4"});
  out.push_back({"codec.composite", preserved, "200 random masks"});
  return out;
}

}  // namespace

std::span<const std::string_view> suite_names() { return kSuites; }

std::vector<CheckResult> run_suite(std::string_view name) {
  if (name == "gla") return gla_suite();
  if (name == "grad") return grad_suite();
  if (name == "mask") return mask_suite();
  if (name == "codec") return codec_suite();
  if (name == "all") {
    std::vector<CheckResult> out;
    for (std::string_view s : kSuites) {
      auto part = run_suite(s);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  throw std::invalid_argument("unknown suite \"" + std::string(name) + "\"");
}

}  // namespace lcg
