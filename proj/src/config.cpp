#include "lcg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace lcg {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, bool>) {
      out += fmt_bool(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got \"" + t + "\"");
  }
  return v;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError(std::string(key) + ": expected a finite number, got \"" + t + "\"");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got \"" + t + "\"");
}

template <class T, class Parse>
std::vector<T> parse_list(std::string_view key, std::string_view text, Parse parse) {
  std::vector<T> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    out.push_back(static_cast<T>(parse(key, text.substr(start, comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Key {
  std::string section;
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  bool identity = true;  // part of the training identity
  std::string dotted() const { return section + "." + name; }
};

template <class M>
Key size_key(std::string section, std::string name, M member, bool identity = true) {
  return Key{std::move(section), std::move(name),
             [member](const RunConfig& c) { return std::to_string(member(c)); },
             [member](RunConfig& c, std::string_view k, std::string_view v) {
               member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_u64(k, v));
             },
             identity};
}

template <class M>
Key double_key(std::string section, std::string name, M member, bool identity = true) {
  return Key{std::move(section), std::move(name),
             [member](const RunConfig& c) { return fmt_double(member(c)); },
             [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = parse_double(k, v); },
             identity};
}

template <class M>
Key bool_key(std::string section, std::string name, M member, bool identity = true) {
  return Key{std::move(section), std::move(name),
             [member](const RunConfig& c) { return fmt_bool(member(c)); },
             [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = parse_bool(k, v); },
             identity};
}

template <class M>
Key string_key(std::string section, std::string name, M member, bool identity = true) {
  return Key{std::move(section), std::move(name),
             [member](const RunConfig& c) { return member(c); },
             [member](RunConfig& c, std::string_view, std::string_view v) { member(c) = trim(v); },
             identity};
}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    // [model]
    k.push_back(size_key("model", "image_size", [](auto& c) -> auto& { return c.model.denoiser.image_size; }));
    k.push_back(size_key("model", "channels", [](auto& c) -> auto& { return c.model.denoiser.image_channels; }));
    k.push_back(size_key("model", "factor", [](auto& c) -> auto& { return c.model.denoiser.factor; }));
    k.push_back(Key{"model", "widths",
                    [](const RunConfig& c) { return join(c.model.denoiser.widths); },
                    [](RunConfig& c, std::string_view key, std::string_view v) {
                      c.model.denoiser.widths = parse_list<std::size_t>(key, v, parse_u64);
                    }});
    k.push_back(Key{"model", "blocks",
                    [](const RunConfig& c) { return join(c.model.denoiser.blocks); },
                    [](RunConfig& c, std::string_view key, std::string_view v) {
                      c.model.denoiser.blocks = parse_list<std::size_t>(key, v, parse_u64);
                    }});
    k.push_back(Key{"model", "cross",
                    [](const RunConfig& c) { return join(c.model.denoiser.cross); },
                    [](RunConfig& c, std::string_view key, std::string_view v) {
                      c.model.denoiser.cross = parse_list<bool>(key, v, parse_bool);
                    }});
    k.push_back(size_key("model", "heads", [](auto& c) -> auto& { return c.model.denoiser.heads; }));
    k.push_back(double_key("model", "tau", [](auto& c) -> auto& { return c.model.denoiser.tau; }));
    k.push_back(size_key("model", "time_dim", [](auto& c) -> auto& { return c.model.denoiser.time_dim; }));
    k.push_back(size_key("model", "embed_width", [](auto& c) -> auto& { return c.model.denoiser.embed_width; }));
    k.push_back(size_key("model", "mlp_ratio", [](auto& c) -> auto& { return c.model.denoiser.mlp_ratio; }));
    // [lcg]
    k.push_back(size_key("lcg", "embed_dim", [](auto& c) -> auto& { return c.model.lcg.embed_dim; }));
    k.push_back(size_key("lcg", "tokens", [](auto& c) -> auto& { return c.model.lcg.tokens; }));
    k.push_back(double_key("lcg", "init_std", [](auto& c) -> auto& { return c.model.lcg.init_std; }));
    // [diffusion]
    k.push_back(size_key("diffusion", "timesteps", [](auto& c) -> auto& { return c.timesteps; }));
    k.push_back(double_key("diffusion", "beta_start", [](auto& c) -> auto& { return c.beta_start; }));
    k.push_back(double_key("diffusion", "beta_end", [](auto& c) -> auto& { return c.beta_end; }));
    // [sample]
    k.push_back(size_key("sample", "steps", [](auto& c) -> auto& { return c.sampler.steps; }, false));
    k.push_back(double_key("sample", "guidance_scale", [](auto& c) -> auto& { return c.sampler.guidance_scale; }, false));
    k.push_back(Key{"sample", "guidance_mode",
                    [](const RunConfig& c) {
                      return std::string(c.sampler.mode == GuidanceMode::ConditionalVsNull
                                             ? "conditional_vs_null"
                                             : "category_contrast");
                    },
                    [](RunConfig& c, std::string_view key, std::string_view v) {
                      const std::string t = trim(v);
                      if (t == "conditional_vs_null") {
                        c.sampler.mode = GuidanceMode::ConditionalVsNull;
                      } else if (t == "category_contrast") {
                        c.sampler.mode = GuidanceMode::CategoryContrast;
                      } else {
                        throw ConfigError(std::string(key) +
                                          ": expected conditional_vs_null or category_contrast");
                      }
                    },
                    false});
    k.push_back(bool_key("sample", "repaint_known", [](auto& c) -> auto& { return c.sampler.repaint_known; }, false));
    k.push_back(size_key("sample", "seed", [](auto& c) -> auto& { return c.sample_seed; }, false));
    // [train]
    k.push_back(size_key("train", "steps", [](auto& c) -> auto& { return c.train.steps; }, false));
    k.push_back(size_key("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    k.push_back(size_key("train", "micro_batch", [](auto& c) -> auto& { return c.train.micro_batch; }));
    k.push_back(size_key("train", "threads", [](auto& c) -> auto& { return c.train.threads; }, false));
    k.push_back(double_key("train", "p_drop", [](auto& c) -> auto& { return c.train.p_drop; }));
    k.push_back(double_key("train", "learning_rate", [](auto& c) -> auto& { return c.train.optimizer.learning_rate; }));
    k.push_back(double_key("train", "beta1", [](auto& c) -> auto& { return c.train.optimizer.beta1; }));
    k.push_back(double_key("train", "beta2", [](auto& c) -> auto& { return c.train.optimizer.beta2; }));
    k.push_back(double_key("train", "eps", [](auto& c) -> auto& { return c.train.optimizer.eps; }));
    k.push_back(double_key("train", "weight_decay", [](auto& c) -> auto& { return c.train.optimizer.weight_decay; }));
    k.push_back(size_key("train", "seed", [](auto& c) -> auto& { return c.train.seed; }));
    k.push_back(size_key("train", "checkpoint_every", [](auto& c) -> auto& { return c.checkpoint_every; }, false));
    k.push_back(Key{"train", "checkpoint_dtype",
                    [](const RunConfig& c) {
                      return std::string(c.checkpoint_dtype == StorageType::F64 ? "f64" : "f32");
                    },
                    [](RunConfig& c, std::string_view key, std::string_view v) {
                      const std::string t = trim(v);
                      if (t == "f64") {
                        c.checkpoint_dtype = StorageType::F64;
                      } else if (t == "f32") {
                        c.checkpoint_dtype = StorageType::F32;
                      } else {
                        throw ConfigError(std::string(key) + ": expected f64 or f32");
                      }
                    },
                    false});
    // [data]
    k.push_back(size_key("data", "seed", [](auto& c) -> auto& { return c.data_seed; }));
    k.push_back(size_key("data", "scenes", [](auto& c) -> auto& { return c.scenes; }));
    k.push_back(size_key("data", "train_samples", [](auto& c) -> auto& { return c.train_samples; }));
    k.push_back(size_key("data", "eval_samples", [](auto& c) -> auto& { return c.eval_samples; }));
    k.push_back(size_key("data", "min_objects", [](auto& c) -> auto& { return c.scene.min_objects; }));
    k.push_back(size_key("data", "max_objects", [](auto& c) -> auto& { return c.scene.max_objects; }));
    k.push_back(double_key("data", "min_extent", [](auto& c) -> auto& { return c.scene.min_extent; }));
    k.push_back(double_key("data", "max_extent", [](auto& c) -> auto& { return c.scene.max_extent; }));
    k.push_back(size_key("data", "min_visible_pixels", [](auto& c) -> auto& { return c.scene.min_visible_pixels; }));
    k.push_back(double_key("data", "foreground_fraction", [](auto& c) -> auto& { return c.pairs.foreground_fraction; }));
    k.push_back(double_key("data", "p_rand", [](auto& c) -> auto& { return c.pairs.compose.p_rand; }));
    k.push_back(double_key("data", "p_obj", [](auto& c) -> auto& { return c.pairs.compose.p_obj; }));
    k.push_back(double_key("data", "min_coverage", [](auto& c) -> auto& { return c.pairs.min_coverage; }));
    k.push_back(double_key("data", "max_coverage", [](auto& c) -> auto& { return c.pairs.max_coverage; }));
    // [brush]
    k.push_back(size_key("brush", "min_strokes", [](auto& c) -> auto& { return c.pairs.brush.min_strokes; }));
    k.push_back(size_key("brush", "max_strokes", [](auto& c) -> auto& { return c.pairs.brush.max_strokes; }));
    k.push_back(size_key("brush", "min_vertices", [](auto& c) -> auto& { return c.pairs.brush.min_vertices; }));
    k.push_back(size_key("brush", "max_vertices", [](auto& c) -> auto& { return c.pairs.brush.max_vertices; }));
    k.push_back(double_key("brush", "min_width", [](auto& c) -> auto& { return c.pairs.brush.min_width; }));
    k.push_back(double_key("brush", "max_width", [](auto& c) -> auto& { return c.pairs.brush.max_width; }));
    k.push_back(double_key("brush", "min_ratio", [](auto& c) -> auto& { return c.pairs.brush.min_ratio; }));
    k.push_back(double_key("brush", "max_ratio", [](auto& c) -> auto& { return c.pairs.brush.max_ratio; }));
    // [paths]
    k.push_back(string_key("paths", "train_data", [](auto& c) -> auto& { return c.train_data; }, false));
    k.push_back(string_key("paths", "eval_data", [](auto& c) -> auto& { return c.eval_data; }, false));
    k.push_back(string_key("paths", "run_dir", [](auto& c) -> auto& { return c.run_dir; }, false));
    return k;
  }();
  return keys;
}

const Key& find_key(std::string_view section, std::string_view name) {
  for (const Key& k : registry()) {
    if (k.section == section && k.name == name) return k;
  }
  throw ConfigError("unknown config key " + std::string(section) + "." + std::string(name));
}

// Settings that live in two places are kept equal here.
void sync(RunConfig& c) {
  c.model.lcg.token_width = c.model.denoiser.embed_width;
  c.model.denoiser.guidance_scale = c.sampler.guidance_scale;
  c.scene.size = c.model.denoiser.image_size;
  c.scene.channels = c.model.denoiser.image_channels;
}

std::string render(const RunConfig& cfg, bool identity_only) {
  std::ostringstream os;
  os << "# lcg " << kToolVersion << "\n";
  std::string section;
  for (const Key& k : registry()) {
    if (identity_only && !k.identity) continue;
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << k.name << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::string pair(const std::string& a, double va, const std::string& b, double vb) {
  return a + " (" + fmt_double(va) + ") exceeds " + b + " (" + fmt_double(vb) + ")";
}

}  // namespace

DiffusionSchedule RunConfig::schedule() const {
  return DiffusionSchedule::linear(timesteps, beta_start, beta_end);
}

void RunConfig::validate() const {
  const BrushConfig& b = pairs.brush;
  require(b.min_ratio <= b.max_ratio, pair("brush.min_ratio", b.min_ratio, "brush.max_ratio", b.max_ratio));
  require(b.min_width <= b.max_width, pair("brush.min_width", b.min_width, "brush.max_width", b.max_width));
  require(b.min_strokes <= b.max_strokes,
          pair("brush.min_strokes", double(b.min_strokes), "brush.max_strokes", double(b.max_strokes)));
  require(b.min_vertices <= b.max_vertices,
          pair("brush.min_vertices", double(b.min_vertices), "brush.max_vertices", double(b.max_vertices)));
  require(pairs.min_coverage <= pairs.max_coverage,
          pair("data.min_coverage", pairs.min_coverage, "data.max_coverage", pairs.max_coverage));
  require(scene.min_objects <= scene.max_objects,
          pair("data.min_objects", double(scene.min_objects), "data.max_objects", double(scene.max_objects)));
  require(scene.min_extent <= scene.max_extent,
          pair("data.min_extent", scene.min_extent, "data.max_extent", scene.max_extent));
  for (auto [name, p] : {std::pair{"data.p_rand", pairs.compose.p_rand},
                         std::pair{"data.p_obj", pairs.compose.p_obj},
                         std::pair{"data.foreground_fraction", pairs.foreground_fraction},
                         std::pair{"train.p_drop", train.p_drop}}) {
    require(p >= 0.0 && p <= 1.0, std::string(name) + " must lie in [0, 1], got " + fmt_double(p));
  }
  require(sampler.guidance_scale >= 1.0,
          "sample.guidance_scale must be >= 1, got " + fmt_double(sampler.guidance_scale));
  require(timesteps >= 1, "diffusion.timesteps must be positive");
  require(sampler.steps >= 1 && sampler.steps <= timesteps,
          "sample.steps must lie in [1, diffusion.timesteps]");
  require(train.batch_size >= 1, "train.batch_size must be positive");
  require(train.micro_batch >= 1, "train.micro_batch must be positive");
  require(train.threads >= 1, "train.threads must be positive");
  require(scenes >= 2, "data.scenes must be at least 2");
  require(train.optimizer.learning_rate > 0, "train.learning_rate must be positive");
  try {
    schedule().validate();
    model.validate();
    scene.validate();
    pairs.validate();
    model.lcg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.message() + " at line " +
                      std::to_string(e.line()));
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("config key " + section + " is outside a section");
    for (const auto& [name, value] : body) {
      const Key& key = find_key(section, name);
      key.set(cfg, key.dotted(), value.data());
    }
  }
  sync(cfg);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

std::string to_text(const RunConfig& cfg) { return render(cfg, false); }

std::string training_identity(const RunConfig& cfg) { return render(cfg, true); }

void set_key(RunConfig& cfg, std::string_view dotted, std::string_view value) {
  const auto dot = dotted.find('.');
  if (dot == std::string_view::npos) throw ConfigError("expected section.key, got " + std::string(dotted));
  const Key& key = find_key(dotted.substr(0, dot), dotted.substr(dot + 1));
  key.set(cfg, key.dotted(), value);
  sync(cfg);
}

}  // namespace lcg
