#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcg/diffusion.hpp"

namespace lcg {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamState {
  std::uint64_t step = 0;
  ModelWeights<Tensor> m;
  ModelWeights<Tensor> v;
};

AdamState make_adam_state(const ModelWeights<Tensor>& params);

/// Decoupled weight decay: θ ← θ − lr·(m̂/(√v̂ + eps) + wd·θ).
void adamw_step(ModelWeights<Tensor>& params, const ModelWeights<Tensor>& grads, AdamState& state,
                const AdamWConfig& cfg);

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  // Gradients are computed on fixed micro-batches and summed in order, so the
  // result does not depend on `threads`.
  std::size_t micro_batch = 8;
  std::size_t threads = 1;
  double p_drop = 0.1;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
};

struct StepResult {
  double loss = 0.0;
  ModelWeights<Tensor> grads;
};

/// Loss and summed gradients of one drawn batch.
StepResult compute_gradients(const TrainingDraw& draw, const ModelWeights<Tensor>& params,
                             const ModelConfig& cfg, std::size_t micro_batch, std::size_t threads);

/// Loss only, same micro-batch decomposition.
double evaluate_loss(const TrainingDraw& draw, const ModelWeights<Tensor>& params,
                     const ModelConfig& cfg, std::size_t micro_batch = 8);

/// Owns the mutable training state: parameters, optimizer moments, step and RNG.
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train, DiffusionSchedule schedule,
          std::vector<TrainingExample> examples, ModelWeights<Tensor> params);

  /// One optimizer update; returns the batch loss before the update.
  double step();

  std::uint64_t steps_done() const { return adam_.step; }
  const ModelWeights<Tensor>& params() const { return params_; }
  const AdamState& optimizer_state() const { return adam_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  void set_threads(std::size_t threads) { train_.threads = threads; }

  std::string rng_state() const;
  void restore(AdamState state, ModelWeights<Tensor> params, const std::string& rng_state);

 private:
  ModelConfig model_;
  TrainConfig train_;
  DiffusionSchedule schedule_;
  std::vector<TrainingExample> examples_;
  ModelWeights<Tensor> params_;
  AdamState adam_;
  Rng rng_;
};

}  // namespace lcg
