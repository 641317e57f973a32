#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lcg/codec.hpp"
#include "lcg/conditioning.hpp"
#include "lcg/denoiser.hpp"

namespace lcg {

/// Discrete noise schedule, timesteps indexed 1..T.
struct DiffusionSchedule {
  std::vector<double> beta;
  std::vector<double> alpha_bar;  // ᾱ_t = ∏_{s≤t} (1 − β_s)

  static DiffusionSchedule linear(std::size_t steps, double beta_start = 1e-4,
                                  double beta_end = 2e-2);
  std::size_t steps() const { return beta.size(); }
  double alpha_bar_at(std::size_t t) const;
  double beta_at(std::size_t t) const;
  /// Throws unless 0 < β_1 < … < β_T < 1.
  void validate() const;
};

/// x_t = √ᾱ·x0 + √(1 − ᾱ)·ε for an explicit ᾱ.
Tensor q_sample_at(const Tensor& x0, double alpha_bar, const Tensor& eps);
/// Forward process at timestep t ∈ [1, T].
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps,
                const DiffusionSchedule& schedule);

/// Codec latents live in [0, 1]; the diffusion runs on 2x − 1.
Tensor to_model_space(const Tensor& latent);
Tensor from_model_space(const Tensor& latent);

struct ModelConfig {
  DenoiserConfig denoiser;
  LcgConfig lcg;
  void validate() const;
};

template <class T>
struct ModelWeights {
  DenoiserWeights<T> denoiser;
  LcgWeights<T> lcg;
};

template <class F, InstanceOf<ModelWeights> W0, class... W>
void visit_params(const std::string& p, F&& f, W0&& w0, W&&... w) {
  visit_params(p + "denoiser.", f, w0.denoiser, w.denoiser...);
  visit_params(p + "lcg.", f, w0.lcg, w.lcg...);
}

ModelWeights<Tensor> init_model(const ModelConfig& cfg, std::uint64_t seed);

/// ε̂ for a batch conditioned on one category per sample.
Var predict_noise(const DenoiserBatch& batch, std::span<const Category> categories,
                  const ModelWeights<Var>& w, const ModelConfig& cfg);
/// Value-only forward on a private tape.
Tensor predict_noise_values(const DenoiserBatch& batch, std::span<const Category> categories,
                            const ModelWeights<Tensor>& w, const ModelConfig& cfg);

/// ε_neg + s·(ε_cond − ε_neg). At s = 1 the conditional prediction is returned as is.
Tensor guidance_combine(const Tensor& eps_cond, const Tensor& eps_negative, double scale);

/// Classifier-free guided prediction. Positive and negative branches share one
/// batched forward pass.
Tensor cfg_predict(const DenoiserBatch& batch, std::span<const Category> categories,
                   double scale, GuidanceMode mode, const ModelWeights<Tensor>& w,
                   const ModelConfig& cfg);

/// Same rule on caller-supplied condition tokens (m rows per sample each).
Tensor cfg_predict_tokens(const DenoiserBatch& batch, const Tensor& cond_tokens,
                          const Tensor& negative_tokens, double scale,
                          const DenoiserWeights<Tensor>& w, const DenoiserConfig& cfg);

struct SamplerConfig {
  std::size_t steps = 50;
  double guidance_scale = 2.0;
  GuidanceMode mode = GuidanceMode::ConditionalVsNull;
  // Replace known-region latents by their forward-noised values after every step.
  bool repaint_known = false;
};

struct InpaintRequest {
  Image masked_image;  // original ⊙ (1 − mask)
  BinaryMask mask;     // 1 = fill
  Category category = Category::Background;
};

/// Strided timesteps τ_i = ⌊i·T/steps⌋, i = 1..steps.
std::vector<std::size_t> sampling_timesteps(std::size_t total, std::size_t steps);

/// Ancestral sampling from pure noise with guided ε̂, then decode and composite.
/// All randomness comes from `rng`, drawn in a fixed order.
std::vector<Image> sample(std::span<const InpaintRequest> requests, const ModelWeights<Tensor>& w,
                          const ModelConfig& cfg, const DiffusionSchedule& schedule,
                          const SamplerConfig& sampler, Rng& rng);

/// Encoded latents of one training pair, in model space.
struct TrainingExample {
  Tensor clean;         // N×latent_channels
  Tensor conditioning;  // N×cond_channels
  Category category = Category::Background;
};

TrainingExample make_training_example(const Image& image, const BinaryMask& mask,
                                      Category category, const DenoiserConfig& cfg);

/// Token rows (N×C) of an encoded request: mask channel then masked latent, model space.
Tensor conditioning_rows(const LatentInputs& latents);

/// All random draws of one training step.
struct TrainingDraw {
  DenoiserBatch batch;
  Tensor noise;  // same shape as batch.noisy
  std::vector<Category> categories;
};

TrainingDraw draw_training_batch(std::span<const TrainingExample> examples,
                                 std::span<const std::size_t> indices,
                                 const DiffusionSchedule& schedule, double p_drop, Rng& rng);

/// Rows [begin, end) of whole samples.
TrainingDraw slice_draw(const TrainingDraw& draw, std::size_t begin, std::size_t end,
                        std::size_t tokens_per_sample);

/// mean((ε̂ − ε)²).
Var epsilon_mse(Var eps_hat, const Tensor& eps);

/// ε-MSE of the model on a drawn batch.
Var training_loss(const TrainingDraw& draw, const ModelWeights<Var>& w, const ModelConfig& cfg);

}  // namespace lcg
