#include "lcg/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lcg {

DiffusionSchedule DiffusionSchedule::linear(std::size_t steps, double beta_start,
                                            double beta_end) {
  if (steps == 0) throw std::invalid_argument("schedule: step count must be positive");
  DiffusionSchedule s;
  s.beta.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - s.beta[i];
    s.alpha_bar[i] = prod;
  }
  s.validate();
  return s;
}

double DiffusionSchedule::alpha_bar_at(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
  return alpha_bar[t - 1];
}

double DiffusionSchedule::beta_at(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
  return beta[t - 1];
}

void DiffusionSchedule::validate() const {
  if (beta.empty() || beta.size() != alpha_bar.size()) {
    throw std::invalid_argument("schedule: beta and alpha_bar must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (!(beta[i] > 0.0 && beta[i] < 1.0)) throw std::invalid_argument("schedule: beta outside (0, 1)");
    if (i > 0 && !(beta[i] > beta[i - 1])) throw std::invalid_argument("schedule: beta not increasing");
    if (!(alpha_bar[i] > 0.0 && alpha_bar[i] < 1.0)) {
      throw std::invalid_argument("schedule: alpha_bar outside (0, 1)");
    }
    if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1])) {
      throw std::invalid_argument("schedule: alpha_bar not decreasing");
    }
  }
}

Tensor q_sample_at(const Tensor& x0, double alpha_bar, const Tensor& eps) {
  if (x0.shape() != eps.shape()) throw_shape_error("q_sample", x0.shape(), eps.shape());
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps,
                const DiffusionSchedule& schedule) {
  return q_sample_at(x0, schedule.alpha_bar_at(t), eps);
}

Tensor to_model_space(const Tensor& latent) {
  Tensor out = latent;
  for (double& v : out.data()) v = 2.0 * v - 1.0;
  return out;
}

Tensor from_model_space(const Tensor& latent) {
  Tensor out = latent;
  for (double& v : out.data()) v = 0.5 * (v + 1.0);
  return out;
}

void ModelConfig::validate() const {
  denoiser.validate();
  lcg.validate();
  if (lcg.token_width != denoiser.embed_width) {
    throw std::invalid_argument("model: lcg token width " + std::to_string(lcg.token_width) +
                                " differs from denoiser embed width " +
                                std::to_string(denoiser.embed_width));
  }
}

ModelWeights<Tensor> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelWeights<Tensor> w;
  w.denoiser = init_denoiser(cfg.denoiser, rng);
  w.lcg = init_lcg(cfg.lcg, rng);
  return w;
}

Var predict_noise(const DenoiserBatch& batch, std::span<const Category> categories,
                  const ModelWeights<Var>& w, const ModelConfig& cfg) {
  if (categories.size() != batch.batch()) {
    throw std::invalid_argument("predict_noise: " + std::to_string(categories.size()) +
                                " categories for " + std::to_string(batch.batch()) + " samples");
  }
  Var tokens = embed_batch(categories, w.lcg);
  return denoise(batch, tokens, w.denoiser, cfg.denoiser);
}

Tensor predict_noise_values(const DenoiserBatch& batch, std::span<const Category> categories,
                            const ModelWeights<Tensor>& w, const ModelConfig& cfg) {
  Tape tape;
  const ModelWeights<Var> vars = bind(tape, w, false);
  return predict_noise(batch, categories, vars, cfg).value();
}

Tensor guidance_combine(const Tensor& eps_cond, const Tensor& eps_negative, double scale) {
  if (eps_cond.shape() != eps_negative.shape()) {
    throw_shape_error("guidance_combine", eps_cond.shape(), eps_negative.shape());
  }
  if (scale == 1.0) return eps_cond;
  Tensor out(eps_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = eps_negative[i] + scale * (eps_cond[i] - eps_negative[i]);
  }
  return out;
}

namespace {

DenoiserBatch doubled(const DenoiserBatch& batch) {
  auto twice = [](const Tensor& t) {
    std::vector<double> data(t.data().begin(), t.data().end());
    data.insert(data.end(), t.data().begin(), t.data().end());
    return Tensor({2 * t.dim(0), t.dim(1)}, std::move(data));
  };
  DenoiserBatch out;
  out.noisy = twice(batch.noisy);
  out.conditioning = twice(batch.conditioning);
  out.timesteps = batch.timesteps;
  out.timesteps.insert(out.timesteps.end(), batch.timesteps.begin(), batch.timesteps.end());
  return out;
}

std::pair<Tensor, Tensor> split_halves(const Tensor& t) {
  const std::size_t rows = t.dim(0) / 2, cols = t.dim(1);
  const auto mid = t.data().begin() + static_cast<std::ptrdiff_t>(rows * cols);
  return {Tensor({rows, cols}, std::vector<double>(t.data().begin(), mid)),
          Tensor({rows, cols}, std::vector<double>(mid, t.data().end()))};
}

void check_scale(double scale) {
  if (!(scale >= 1.0)) throw std::invalid_argument("guidance scale must be >= 1");
}

}  // namespace

Tensor cfg_predict(const DenoiserBatch& batch, std::span<const Category> categories,
                   double scale, GuidanceMode mode, const ModelWeights<Tensor>& w,
                   const ModelConfig& cfg) {
  check_scale(scale);
  if (scale == 1.0) return predict_noise_values(batch, categories, w, cfg);
  std::vector<Category> both(categories.begin(), categories.end());
  for (Category c : categories) both.push_back(negative_category(c, mode));
  auto [cond, negative] = split_halves(predict_noise_values(doubled(batch), both, w, cfg));
  return guidance_combine(cond, negative, scale);
}

Tensor cfg_predict_tokens(const DenoiserBatch& batch, const Tensor& cond_tokens,
                          const Tensor& negative_tokens, double scale,
                          const DenoiserWeights<Tensor>& w, const DenoiserConfig& cfg) {
  check_scale(scale);
  Tape tape;
  const DenoiserWeights<Var> vars = bind(tape, w, false);
  if (scale == 1.0) return denoise(batch, tape.constant(cond_tokens), vars, cfg).value();
  const Var parts[] = {tape.constant(cond_tokens), tape.constant(negative_tokens)};
  auto [cond, negative] =
      split_halves(denoise(doubled(batch), concat_rows(parts), vars, cfg).value());
  return guidance_combine(cond, negative, scale);
}

std::vector<std::size_t> sampling_timesteps(std::size_t total, std::size_t steps) {
  if (steps == 0 || steps > total) {
    throw std::invalid_argument("sampler: steps must lie in [1, " + std::to_string(total) + "]");
  }
  std::vector<std::size_t> out(steps);
  for (std::size_t i = 1; i <= steps; ++i) out[i - 1] = i * total / steps;
  return out;
}

Tensor conditioning_rows(const LatentInputs& latents) {
  const std::size_t n = latents.image.dim(0) * latents.image.dim(1);
  const std::size_t c = latents.masked_image.dim(2);
  Tensor out({n, 1 + c});
  for (std::size_t r = 0; r < n; ++r) {
    out[r * (1 + c)] = latents.mask[r];
    for (std::size_t j = 0; j < c; ++j) out[r * (1 + c) + 1 + j] = 2.0 * latents.masked_image[r * c + j] - 1.0;
  }
  return out;
}

std::vector<Image> sample(std::span<const InpaintRequest> requests, const ModelWeights<Tensor>& w,
                          const ModelConfig& cfg, const DiffusionSchedule& schedule,
                          const SamplerConfig& sampler, Rng& rng) {
  const DenoiserConfig& dc = cfg.denoiser;
  const std::size_t n = dc.tokens(), channels = dc.latent_channels();
  const std::size_t count = requests.size();
  if (count == 0) return {};
  const std::vector<std::size_t> taus = sampling_timesteps(schedule.steps(), sampler.steps);

  DenoiserBatch batch;
  batch.conditioning = Tensor({count * n, dc.cond_channels()});
  std::vector<Category> categories;
  Tensor known({count * n, channels});
  std::vector<std::uint8_t> fill_cell(count * n, 0);
  for (std::size_t b = 0; b < count; ++b) {
    const InpaintRequest& req = requests[b];
    if (req.masked_image.height != dc.image_size || req.masked_image.width != dc.image_size ||
        req.masked_image.channels != dc.image_channels) {
      throw std::invalid_argument("sample: image must be " + std::to_string(dc.image_size) + "x" +
                                  std::to_string(dc.image_size) + "x" +
                                  std::to_string(dc.image_channels));
    }
    const LatentInputs lat = encode_inputs(req.masked_image, req.mask, req.masked_image, dc.factor);
    const Tensor cond = conditioning_rows(lat);
    std::copy(cond.data().begin(), cond.data().end(),
              batch.conditioning.data().begin() + static_cast<std::ptrdiff_t>(b * cond.size()));
    const Tensor clean = to_model_space(lat.image);
    std::copy(clean.data().begin(), clean.data().end(),
              known.data().begin() + static_cast<std::ptrdiff_t>(b * n * channels));
    for (std::size_t r = 0; r < n; ++r) fill_cell[b * n + r] = lat.mask[r] != 0.0;
    categories.push_back(req.category);
  }

  Tensor x = normal_tensor({count * n, channels}, 1.0, rng);
  for (std::size_t i = taus.size(); i-- > 0;) {
    const std::size_t t = taus[i];
    batch.noisy = x;
    batch.timesteps.assign(count, t);
    const Tensor eps = cfg_predict(batch, categories, sampler.guidance_scale, sampler.mode, w, cfg);
    const double ab = schedule.alpha_bar_at(t);
    Tensor x0(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) {
      x0[k] = std::clamp((x[k] - std::sqrt(1.0 - ab) * eps[k]) / std::sqrt(ab), -1.0, 1.0);
    }
    if (i == 0) {
      x = std::move(x0);
      break;
    }
    const double ab_prev = schedule.alpha_bar_at(taus[i - 1]);
    const double beta = 1.0 - ab / ab_prev;
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
    const Tensor z = normal_tensor(x.shape(), 1.0, rng);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = c0 * x0[k] + ct * x[k] + sigma * z[k];
    if (sampler.repaint_known) {
      const Tensor zk = normal_tensor(x.shape(), 1.0, rng);
      const Tensor noised = q_sample_at(known, ab_prev, zk);
      for (std::size_t r = 0; r < count * n; ++r) {
        if (fill_cell[r]) continue;
        for (std::size_t j = 0; j < channels; ++j) x[r * channels + j] = noised[r * channels + j];
      }
    }
  }

  std::vector<Image> out;
  const std::size_t g = dc.grid();
  for (std::size_t b = 0; b < count; ++b) {
    const auto first = x.data().begin() + static_cast<std::ptrdiff_t>(b * n * channels);
    Tensor latent({g, g, channels}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n * channels)));
    Image generated = decode_output(from_model_space(latent), dc.image_channels, dc.factor);
    for (double& p : generated.pixels) p = std::clamp(p, 0.0, 1.0);
    out.push_back(composite(requests[b].masked_image, generated, requests[b].mask));
  }
  return out;
}

TrainingExample make_training_example(const Image& image, const BinaryMask& mask,
                                      Category category, const DenoiserConfig& cfg) {
  const LatentInputs lat = encode_inputs(image, mask, apply_mask(image, mask), cfg.factor);
  TrainingExample ex;
  ex.clean = to_model_space(lat.image).reshaped({cfg.tokens(), cfg.latent_channels()});
  ex.conditioning = conditioning_rows(lat);
  ex.category = category;
  return ex;
}

TrainingDraw draw_training_batch(std::span<const TrainingExample> examples,
                                 std::span<const std::size_t> indices,
                                 const DiffusionSchedule& schedule, double p_drop, Rng& rng) {
  if (indices.empty()) throw std::invalid_argument("training batch is empty");
  const TrainingExample& first = examples[indices[0]];
  const std::size_t n = first.clean.dim(0), c = first.clean.dim(1), cc = first.conditioning.dim(1);
  TrainingDraw draw;
  std::vector<double> noisy, cond, noise;
  noisy.reserve(indices.size() * n * c);
  noise.reserve(indices.size() * n * c);
  cond.reserve(indices.size() * n * cc);
  std::uniform_int_distribution<std::size_t> pick_t(1, schedule.steps());
  for (std::size_t idx : indices) {
    const TrainingExample& ex = examples[idx];
    const std::size_t t = pick_t(rng);
    const Tensor eps = normal_tensor(ex.clean.shape(), 1.0, rng);
    const Tensor xt = q_sample(ex.clean, t, eps, schedule);
    draw.categories.push_back(drop_condition(ex.category, p_drop, rng));
    draw.batch.timesteps.push_back(t);
    noisy.insert(noisy.end(), xt.data().begin(), xt.data().end());
    noise.insert(noise.end(), eps.data().begin(), eps.data().end());
    cond.insert(cond.end(), ex.conditioning.data().begin(), ex.conditioning.data().end());
  }
  const std::size_t rows = indices.size() * n;
  draw.batch.noisy = Tensor({rows, c}, std::move(noisy));
  draw.batch.conditioning = Tensor({rows, cc}, std::move(cond));
  draw.noise = Tensor({rows, c}, std::move(noise));
  return draw;
}

TrainingDraw slice_draw(const TrainingDraw& draw, std::size_t begin, std::size_t end,
                        std::size_t tokens_per_sample) {
  auto rows_of = [&](const Tensor& t) {
    const std::size_t cols = t.dim(1);
    const auto b = t.data().begin() + static_cast<std::ptrdiff_t>(begin * tokens_per_sample * cols);
    const auto e = t.data().begin() + static_cast<std::ptrdiff_t>(end * tokens_per_sample * cols);
    return Tensor({(end - begin) * tokens_per_sample, cols}, std::vector<double>(b, e));
  };
  TrainingDraw out;
  out.batch.noisy = rows_of(draw.batch.noisy);
  out.batch.conditioning = rows_of(draw.batch.conditioning);
  out.batch.timesteps.assign(draw.batch.timesteps.begin() + static_cast<std::ptrdiff_t>(begin),
                             draw.batch.timesteps.begin() + static_cast<std::ptrdiff_t>(end));
  out.noise = rows_of(draw.noise);
  out.categories.assign(draw.categories.begin() + static_cast<std::ptrdiff_t>(begin),
                        draw.categories.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Var epsilon_mse(Var eps_hat, const Tensor& eps) {
  return mean_square(sub(eps_hat, eps_hat.tape().constant(eps)));
}

Var training_loss(const TrainingDraw& draw, const ModelWeights<Var>& w, const ModelConfig& cfg) {
  return epsilon_mse(predict_noise(draw.batch, draw.categories, w, cfg), draw.noise);
}

}  // namespace lcg
