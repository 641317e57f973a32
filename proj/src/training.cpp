#include "lcg/training.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lcg {

AdamState make_adam_state(const ModelWeights<Tensor>& params) {
  return AdamState{0, zeros_like(params), zeros_like(params)};
}

void adamw_step(ModelWeights<Tensor>& params, const ModelWeights<Tensor>& grads, AdamState& state,
                const AdamWConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  visit_params(
      "",
      [&](const std::string& name, Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
        if (p.shape() != g.shape()) throw_shape_error("adamw " + name, p.shape(), g.shape());
        for (std::size_t i = 0; i < p.size(); ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
          v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
          const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
          p[i] -= cfg.learning_rate * (update + cfg.weight_decay * p[i]);
        }
      },
      params, grads, state.m, state.v);
}

namespace {

struct ChunkResult {
  double loss = 0.0;
  ModelWeights<Tensor> grads;
};

ChunkResult run_chunk(const TrainingDraw& chunk, double weight, const ModelWeights<Tensor>& params,
                      const ModelConfig& cfg, bool with_grad) {
  Tape tape;
  const ModelWeights<Var> vars = bind(tape, params, with_grad);
  Var loss = scale(training_loss(chunk, vars, cfg), weight);
  ChunkResult out;
  out.loss = loss.value().item();
  if (with_grad) {
    tape.backward(loss);
    out.grads = gradients(tape, vars);
  }
  return out;
}

std::vector<ChunkResult> run_chunks(const TrainingDraw& draw, const ModelWeights<Tensor>& params,
                                    const ModelConfig& cfg, std::size_t micro_batch,
                                    std::size_t threads, bool with_grad) {
  const std::size_t total = draw.batch.batch();
  if (total == 0) throw std::invalid_argument("training batch is empty");
  if (micro_batch == 0) throw std::invalid_argument("micro_batch must be positive");
  const std::size_t n = cfg.denoiser.tokens();
  const std::size_t chunks = (total + micro_batch - 1) / micro_batch;
  std::vector<ChunkResult> results(chunks);
  auto work = [&](std::size_t c) {
    const std::size_t begin = c * micro_batch;
    const std::size_t end = std::min(total, begin + micro_batch);
    const double weight = static_cast<double>(end - begin) / static_cast<double>(total);
    results[c] = run_chunk(slice_draw(draw, begin, end, n), weight, params, cfg, with_grad);
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), chunks);
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = next++; c < chunks; c = next++) work(c);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace

StepResult compute_gradients(const TrainingDraw& draw, const ModelWeights<Tensor>& params,
                             const ModelConfig& cfg, std::size_t micro_batch, std::size_t threads) {
  std::vector<ChunkResult> chunks = run_chunks(draw, params, cfg, micro_batch, threads, true);
  StepResult out;
  out.grads = std::move(chunks[0].grads);
  out.loss = chunks[0].loss;
  for (std::size_t c = 1; c < chunks.size(); ++c) {
    out.loss += chunks[c].loss;
    visit_params(
        "",
        [](const std::string&, Tensor& acc, const Tensor& g) {
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
        },
        out.grads, chunks[c].grads);
  }
  return out;
}

double evaluate_loss(const TrainingDraw& draw, const ModelWeights<Tensor>& params,
                     const ModelConfig& cfg, std::size_t micro_batch) {
  double loss = 0.0;
  for (const auto& c : run_chunks(draw, params, cfg, micro_batch, 1, false)) loss += c.loss;
  return loss;
}

Trainer::Trainer(ModelConfig model, TrainConfig train, DiffusionSchedule schedule,
                 std::vector<TrainingExample> examples, ModelWeights<Tensor> params)
    : model_(std::move(model)),
      train_(train),
      schedule_(std::move(schedule)),
      examples_(std::move(examples)),
      params_(std::move(params)),
      adam_(make_adam_state(params_)),
      rng_(train.seed) {
  if (examples_.empty()) throw std::invalid_argument("trainer: no training examples");
  if (train_.batch_size == 0) throw std::invalid_argument("trainer: batch_size must be positive");
}

double Trainer::step() {
  std::uniform_int_distribution<std::size_t> pick(0, examples_.size() - 1);
  std::vector<std::size_t> indices(train_.batch_size);
  for (auto& i : indices) i = pick(rng_);
  const TrainingDraw draw = draw_training_batch(examples_, indices, schedule_, train_.p_drop, rng_);
  StepResult r = compute_gradients(draw, params_, model_, train_.micro_batch, train_.threads);
  adamw_step(params_, r.grads, adam_, train_.optimizer);
  return r.loss;
}

std::string Trainer::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void Trainer::restore(AdamState state, ModelWeights<Tensor> params, const std::string& rng_state) {
  adam_ = std::move(state);
  params_ = std::move(params);
  std::istringstream is(rng_state);
  is >> rng_;
  if (!is) throw std::invalid_argument("trainer: corrupt RNG state");
}

}  // namespace lcg
