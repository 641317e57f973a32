#include "lcg/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lcg {

std::string_view to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::ObjectSemantic: return "object_semantic";
    case MaskKind::SceneSemantic: return "scene_semantic";
    case MaskKind::RandomBrush: return "random_brush";
    case MaskKind::RandomObject: return "random_object";
  }
  return "unknown";
}

std::string_view to_string(Category category) {
  switch (category) {
    case Category::Foreground: return "foreground";
    case Category::Background: return "background";
    case Category::Null: return "null";
  }
  return "unknown";
}

Category parse_category(std::string_view text) {
  if (text == "foreground" || text == "fg") return Category::Foreground;
  if (text == "background" || text == "bg") return Category::Background;
  if (text == "null") return Category::Null;
  throw std::invalid_argument("unknown category '" + std::string(text) + "'");
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), bits_(std::move(values)) {
  if (bits_.size() != height * width) {
    throw std::invalid_argument("mask: " + std::to_string(bits_.size()) + " values for " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] > 1) {
      throw std::invalid_argument("mask: non-binary value " + std::to_string(bits_[i]) +
                                  " at index " + std::to_string(i));
    }
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double BinaryMask::coverage() const {
  return bits_.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits_.size());
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  if (!same_resolution(other)) {
    throw std::invalid_argument("mask: resolution mismatch " + std::to_string(height_) + "x" +
                                std::to_string(width_) + " vs " + std::to_string(other.height_) +
                                "x" + std::to_string(other.width_));
  }
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
  return *this;
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& b : out.bits_) b ^= 1;
  return out;
}

BinaryMask foreground_mask(const BinaryMask& object_mask) {
  return BinaryMask(object_mask.height(), object_mask.width(), object_mask.values());
}

void MaskComposeConfig::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(p_rand)) throw std::invalid_argument("p_rand must lie in [0, 1]");
  if (!in_unit(p_obj)) throw std::invalid_argument("p_obj must lie in [0, 1]");
}

ComposedMask compose_background_mask(const BinaryMask& scene, const BinaryMask& brush,
                                     const BinaryMask& other_object, const MaskComposeConfig& cfg,
                                     Rng& rng) {
  cfg.validate();
  if (!scene.same_resolution(brush) || !scene.same_resolution(other_object)) {
    throw std::invalid_argument("compose_background_mask: mask resolutions differ");
  }
  ComposedMask out;
  out.with_brush = std::bernoulli_distribution(cfg.p_rand)(rng);
  out.with_object = std::bernoulli_distribution(cfg.p_obj)(rng);
  out.mask = scene;
  if (out.with_brush) out.mask |= brush;
  if (out.with_object) out.mask |= other_object;
  return out;
}

void LcgConfig::validate() const {
  if (embed_dim == 0 || tokens == 0 || token_width == 0) {
    throw std::invalid_argument("lcg: embed_dim, tokens and token_width must be positive");
  }
}

LcgWeights<Tensor> init_lcg(const LcgConfig& cfg, Rng& rng) {
  cfg.validate();
  LcgWeights<Tensor> w;
  w.foreground = normal_tensor({cfg.tokens, cfg.embed_dim}, cfg.init_std, rng);
  w.background = normal_tensor({cfg.tokens, cfg.embed_dim}, cfg.init_std, rng);
  w.null_tokens = normal_tensor({cfg.tokens, cfg.embed_dim}, cfg.init_std, rng);
  w.up_projection = normal_tensor({cfg.embed_dim, cfg.token_width},
                                  1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)), rng);
  return w;
}

namespace {
Var select(Category category, const LcgWeights<Var>& table) {
  switch (category) {
    case Category::Foreground: return table.foreground;
    case Category::Background: return table.background;
    case Category::Null: return table.null_tokens;
  }
  throw std::invalid_argument("embed: unknown category");
}
}  // namespace

Var embed(Category category, const LcgWeights<Var>& table) {
  return matmul(select(category, table), table.up_projection);
}

Var embed_batch(std::span<const Category> categories, const LcgWeights<Var>& table) {
  if (categories.empty()) throw std::invalid_argument("embed_batch: no categories");
  std::vector<Var> rows;
  rows.reserve(categories.size());
  for (Category c : categories) rows.push_back(select(c, table));
  return matmul(concat_rows(rows), table.up_projection);
}

Category drop_condition(Category category, double p_drop, Rng& rng) {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw std::invalid_argument("p_drop must lie in [0, 1]");
  return std::bernoulli_distribution(p_drop)(rng) ? Category::Null : category;
}

Category negative_category(Category positive, GuidanceMode mode) {
  if (mode == GuidanceMode::ConditionalVsNull) return Category::Null;
  switch (positive) {
    case Category::Foreground: return Category::Background;
    case Category::Background: return Category::Foreground;
    case Category::Null: return Category::Null;
  }
  return Category::Null;
}

}  // namespace lcg
