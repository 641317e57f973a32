#include "lcg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "lcg/checkpoint.hpp"
#include "lcg/checks.hpp"
#include "lcg/config.hpp"
#include "lcg/image_io.hpp"
#include "lcg/pipeline.hpp"
#include "lcg/shard.hpp"

namespace lcg {

namespace fs = std::filesystem;

namespace {

/// Bad invocation detected after parsing; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> steps;
  std::optional<double> scale;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string image;
  std::string mask;
  std::string category = "background";
  std::string suite;
  std::size_t count = 8;
  bool resume = false;
};

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_logger_st("lcg");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("LCG_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("LCG_LOG={} not recognized, using info", level);
  }
}

RunConfig base_config(const Options& o) {
  return o.config.empty() ? RunConfig{} : load_config(o.config);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class RunLock {
 public:
  explicit RunLock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw std::runtime_error("run directory is locked (" + path_.string() + " exists)");
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

std::string first_difference(const std::string& a, const std::string& b) {
  std::istringstream sa(a), sb(b);
  std::string la, lb, section;
  while (true) {
    const bool ga = static_cast<bool>(std::getline(sa, la));
    const bool gb = static_cast<bool>(std::getline(sb, lb));
    if (!ga && !gb) return "";
    if (ga && !la.empty() && la.front() == '[') section = la;
    if (la != lb || ga != gb) return section + " checkpoint has \"" + la + "\", config has \"" + lb + "\"";
  }
}

std::string checkpoint_name(std::uint64_t step) {
  std::ostringstream os;
  os << "step_" << std::setw(6) << std::setfill('0') << step << ".lcgc";
  return os.str();
}

int cmd_datagen(const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  if (o.seed) cfg.data_seed = *o.seed;
  cfg.validate();
  fs::path train_path = cfg.train_data, eval_path = cfg.eval_data;
  if (!o.out.empty()) {
    train_path = fs::path(o.out) / "train.lcgs";
    eval_path = fs::path(o.out) / "eval.lcgs";
  }
  std::size_t violations = 0;
  for (auto [split, path] : {std::pair{Split::Train, train_path}, std::pair{Split::Eval, eval_path}}) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const Shard shard = generate_split(cfg, split);
    const ScanReport scan = scan_samples(shard.samples, cfg.pairs.min_coverage, cfg.pairs.max_coverage);
    for (const auto& v : scan.violations) spdlog::error("{}: {}", path.string(), v);
    violations += scan.violations.size();
    const auto fg = std::count_if(shard.samples.begin(), shard.samples.end(),
                                  [](const ImageMaskSample& s) { return s.category == Category::Foreground; });
    write_shard(shard, path);
    out << path.string() << ": " << shard.samples.size() << " samples (" << fg << " foreground), "
        << scan.violations.size() << " violations\n";
  }
  return violations == 0 ? kExitOk : kExitFailure;
}

int cmd_maskgen(const Options& o, std::ostream& out) {
  RunConfig cfg = base_config(o);
  if (o.seed) cfg.data_seed = *o.seed;
  cfg.train_samples = o.count;
  cfg.validate();
  const fs::path dir = o.out.empty() ? fs::path("masks") : fs::path(o.out);
  fs::create_directories(dir);
  const Shard shard = generate_split(cfg, Split::Train);
  Rng rng(derive_seed(cfg.data_seed, 2));
  std::ofstream manifest(dir / "manifest.txt");
  manifest << to_text(cfg) << "\n# file kind category coverage\n";
  for (std::size_t i = 0; i < shard.samples.size(); ++i) {
    const ImageMaskSample& s = shard.samples[i];
    const std::string stem = "sample_" + std::to_string(i);
    write_image(s.image, dir / (stem + ".ppm"));
    write_mask(s.mask, dir / (stem + "_mask.pgm"));
    manifest << stem << "_mask.pgm " << to_string(s.mask_kind) << ' ' << to_string(s.category) << ' '
             << s.mask.coverage() << '\n';
    const BinaryMask brush = gen_brush_mask(rng, cfg.scene.size, cfg.scene.size, cfg.pairs.brush);
    write_mask(brush, dir / ("brush_" + std::to_string(i) + ".pgm"));
    manifest << "brush_" << i << ".pgm random_brush - " << brush.coverage() << '\n';
  }
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  out << "wrote " << shard.samples.size() << " mask previews to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = base_config(o);
  if (o.steps) cfg.train.steps = *o.steps;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.threads) cfg.train.threads = *o.threads;
  cfg.validate();
  const fs::path dir = o.out.empty() ? fs::path(cfg.run_dir) : fs::path(o.out);
  const fs::path data = o.data.empty() ? fs::path(cfg.train_data) : fs::path(o.data);
  fs::create_directories(dir);
  RunLock lock(dir / "train.lock");
  const fs::path latest = dir / "latest.lcgc";

  const Shard shard = read_shard(data);
  if (shard.samples.empty()) throw std::runtime_error("training shard " + data.string() + " is empty");
  Trainer trainer = make_trainer(cfg, training_examples(shard.samples, cfg.model));
  const Dtype dtype = cfg.checkpoint_dtype == StorageType::F32 ? Dtype::F32 : Dtype::F64;
  const std::string text = to_text(cfg);
  auto save = [&] {
    const Checkpoint ckpt = make_checkpoint(trainer, text, dtype);
    save_checkpoint(ckpt, dir / checkpoint_name(ckpt.step));
    save_checkpoint(ckpt, latest);
    spdlog::debug("checkpoint at step {}", ckpt.step);
  };

  if (o.resume) {
    const Checkpoint ckpt = load_checkpoint(latest);
    const RunConfig previous = parse_config(ckpt.config);
    const std::string diff = first_difference(training_identity(previous), training_identity(cfg));
    if (!diff.empty()) {
      err << "error: cannot resume, config differs: " << diff << '\n';
      return kExitUsage;
    }
    restore_trainer(trainer, ckpt);
    spdlog::info("resumed at step {}", trainer.steps_done());
  } else {
    if (fs::exists(latest)) {
      throw UsageError(dir.string() + " already holds a run; pass --resume or choose another --out");
    }
    save();
  }

  std::ofstream log(dir / "loss.log", std::ios::app);
  if (!log) throw std::runtime_error("cannot open " + (dir / "loss.log").string());
  const auto start = std::chrono::steady_clock::now();
  while (trainer.steps_done() < cfg.train.steps) {
    const double loss = trainer.step();
    const std::uint64_t step = trainer.steps_done();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << step << ' ' << format_double(loss) << ' ' << std::fixed << std::setprecision(3) << secs
        << std::defaultfloat << '\n';
    log.flush();
    if (step % 50 == 0) spdlog::info("step {} loss {:.6f}", step, loss);
    if ((cfg.checkpoint_every && step % cfg.checkpoint_every == 0) || step == cfg.train.steps) save();
  }
  out << "trained to step " << trainer.steps_done() << ", checkpoint " << latest.string() << '\n';
  return kExitOk;
}

struct LoadedModel {
  Checkpoint ckpt;
  RunConfig cfg;
  ModelWeights<Tensor> weights;
};

LoadedModel load_model(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  LoadedModel m;
  m.ckpt = load_checkpoint(o.checkpoint);
  m.cfg = parse_config(m.ckpt.config);
  if (o.scale) {
    m.cfg.sampler.guidance_scale = *o.scale;
    m.cfg.model.denoiser.guidance_scale = *o.scale;
  }
  if (o.steps) m.cfg.sampler.steps = *o.steps;
  if (o.seed) m.cfg.sample_seed = *o.seed;
  m.cfg.validate();
  m.weights = checkpoint_weights(m.ckpt, m.cfg.model);
  return m;
}

int cmd_sample(const Options& o, std::ostream& out) {
  if (o.image.empty() || o.mask.empty() || o.out.empty()) {
    throw UsageError("sample needs --image, --mask and --out");
  }
  const LoadedModel m = load_model(o);
  const Category category = parse_category(o.category);
  const Image image = read_image(o.image);
  const BinaryMask mask = read_mask(o.mask);
  const DenoiserConfig& dc = m.cfg.model.denoiser;
  if (image.height % dc.factor || image.width % dc.factor) {
    throw UsageError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     " is not divisible by the codec factor " + std::to_string(dc.factor));
  }
  if (image.height != dc.image_size || image.width != dc.image_size || image.channels != dc.image_channels) {
    throw UsageError("model expects " + std::to_string(dc.image_size) + "x" + std::to_string(dc.image_size) +
                     " images with " + std::to_string(dc.image_channels) + " channels");
  }
  if (mask.height() != image.height || mask.width() != image.width) {
    throw UsageError("mask resolution differs from the image");
  }
  spdlog::info("guidance scale {}, {} steps, seed {}", m.cfg.sampler.guidance_scale, m.cfg.sampler.steps,
               m.cfg.sample_seed);
  ImageMaskSample s{image, mask, category, MaskKind::SceneSemantic, 0};
  const Image result = inpaint(std::span(&s, 1), m.weights, m.cfg, m.cfg.sample_seed)[0];
  write_image(result, o.out);
  out << "wrote " << o.out << '\n';
  return kExitOk;
}

nlohmann::json bucket_json(const MetricBucket& b) {
  return {{"coverage_lo", b.coverage_lo}, {"coverage_hi", b.coverage_hi}, {"count", b.count},
          {"masked_l1", b.masked_l1},     {"psnr_db", b.psnr}};
}

int cmd_eval(const Options& o, std::ostream& out) {
  const LoadedModel m = load_model(o);
  const fs::path data = o.data.empty() ? fs::path(m.cfg.eval_data) : fs::path(o.data);
  const Shard shard = read_shard(data);
  if (shard.samples.empty()) throw std::runtime_error("evaluation shard " + data.string() + " is empty");
  const std::vector<Image> outputs = inpaint(shard.samples, m.weights, m.cfg, m.cfg.sample_seed);
  const EvalReport report = evaluate(shard.samples, outputs);
  nlohmann::json j;
  j["tool_version"] = std::string(kToolVersion);
  j["checkpoint"] = o.checkpoint;
  j["checkpoint_step"] = m.ckpt.step;
  j["data"] = data.string();
  j["samples"] = shard.samples.size();
  j["overall"] = bucket_json(report.overall);
  j["by_coverage"] = nlohmann::json::array();
  for (const MetricBucket& b : report.by_coverage) j["by_coverage"].push_back(bucket_json(b));
  j["config"] = to_text(m.cfg);
  const std::string text = j.dump(2) + "\n";
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + o.out);
  }
  out << text;
  return kExitOk;
}

int cmd_check(const Options& o, std::ostream& out) {
  std::vector<CheckResult> results;
  try {
    results = run_suite(o.suite);
  } catch (const std::invalid_argument& e) {
    std::string names;
    for (auto s : suite_names()) names += std::string(s) + ", ";
    throw UsageError(std::string(e.what()) + "; choose one of " + names + "all");
  }
  bool all = true;
  for (const CheckResult& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all &= r.passed;
  }
  return all ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  setup_logging();
  CLI::App app{"Latent category guided inpainting toolkit", "lcg"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--out", o.out, "Output path");
  };
  auto* datagen = app.add_subcommand("datagen", "Generate train and eval shards");
  add_common(datagen);
  auto* maskgen = app.add_subcommand("maskgen", "Write mask previews");
  add_common(maskgen);
  maskgen->add_option("--count", o.count, "Number of previews")->check(CLI::PositiveNumber);
  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train);
  train->add_option("--data", o.data, "Training shard");
  train->add_option("--steps", o.steps, "Total optimizer steps");
  train->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  train->add_flag("--resume", o.resume, "Continue from the latest checkpoint in --out");
  auto* sample = app.add_subcommand("sample", "Inpaint one image");
  sample->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  sample->add_option("--image", o.image, "Input image (PPM/PGM)");
  sample->add_option("--mask", o.mask, "Mask (PGM, 0 keep / 255 fill)");
  sample->add_option("--category", o.category, "foreground, background or null");
  sample->add_option("--scale", o.scale, "Guidance scale");
  sample->add_option("--steps", o.steps, "Sampling steps");
  sample->add_option("--seed", o.seed, "Sampling seed");
  sample->add_option("--out", o.out, "Output image");
  auto* eval = app.add_subcommand("eval", "Masked-region metrics on a shard");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", o.data, "Evaluation shard");
  eval->add_option("--scale", o.scale, "Guidance scale");
  eval->add_option("--steps", o.steps, "Sampling steps");
  eval->add_option("--seed", o.seed, "Sampling seed");
  eval->add_option("--out", o.out, "Report path");
  auto* check = app.add_subcommand("check", "Run a verification suite");
  check->add_option("suite", o.suite, "gla, grad, mask, codec or all")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (datagen->parsed()) return cmd_datagen(o, out);
    if (maskgen->parsed()) return cmd_maskgen(o, out);
    if (train->parsed()) return cmd_train(o, out, err);
    if (sample->parsed()) return cmd_sample(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (check->parsed()) return cmd_check(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ChecksumError& e) {
    err << "corrupt file: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lcg
