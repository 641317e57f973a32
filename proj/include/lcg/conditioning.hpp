#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lcg/autodiff.hpp"
#include "lcg/params.hpp"
#include "lcg/random.hpp"

namespace lcg {

enum class MaskKind : std::uint8_t {
  ObjectSemantic = 0,
  SceneSemantic = 1,
  RandomBrush = 2,
  RandomObject = 3,
};

enum class Category : std::uint8_t {
  Foreground = 0,
  Background = 1,
  Null = 2,
};

/// Object-semantic masks train the foreground embedding; the other three kinds
/// train the background embedding.
constexpr Category category_for(MaskKind kind) {
  return kind == MaskKind::ObjectSemantic ? Category::Foreground : Category::Background;
}

std::string_view to_string(MaskKind kind);
std::string_view to_string(Category category);
/// Accepts "foreground"/"fg", "background"/"bg", "null".
Category parse_category(std::string_view text);

/// Row-major H×W mask with values in {0, 1}; 1 marks pixels to fill.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);
  /// Throws std::invalid_argument if any value is not 0 or 1.
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return bits_[y * width_ + x]; }
  void set(std::size_t y, std::size_t x, bool on) { bits_[y * width_ + x] = on ? 1 : 0; }
  void set(std::size_t i, bool on) { bits_[i] = on ? 1 : 0; }
  const std::vector<std::uint8_t>& values() const { return bits_; }

  std::size_t count() const;
  double coverage() const;
  bool same_resolution(const BinaryMask& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  BinaryMask& operator|=(const BinaryMask& other);
  BinaryMask complement() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// M_fg = M_obj.
BinaryMask foreground_mask(const BinaryMask& object_mask);

struct MaskComposeConfig {
  double p_rand = 0.5;
  double p_obj = 0.5;
  void validate() const;
};

struct ComposedMask {
  BinaryMask mask;
  bool with_brush = false;
  bool with_object = false;
};

/// M_bg = M_scene ∨ (b_r ∧ M_rand) ∨ (b_o ∧ M_obj′) with b_r ~ Bernoulli(p_rand),
/// b_o ~ Bernoulli(p_obj). Both draws are always taken, in that order.
ComposedMask compose_background_mask(const BinaryMask& scene, const BinaryMask& brush,
                                     const BinaryMask& other_object, const MaskComposeConfig& cfg,
                                     Rng& rng);

struct LcgConfig {
  std::size_t embed_dim = 20;  // E.Dim
  std::size_t tokens = 1;      // m tokens per category
  std::size_t token_width = 32;  // d_e after up-projection
  double init_std = 0.02;
  void validate() const;
};

/// Learnable foreground, background and null tokens plus the shared up-projection.
template <class T>
struct LcgWeights {
  T foreground;
  T background;
  T null_tokens;
  T up_projection;
};

template <class F, InstanceOf<LcgWeights> W0, class... W>
void visit_params(const std::string& p, F&& f, W0&& w0, W&&... w) {
  f(p + "foreground", w0.foreground, w.foreground...);
  f(p + "background", w0.background, w.background...);
  f(p + "null", w0.null_tokens, w.null_tokens...);
  f(p + "up_projection", w0.up_projection, w.up_projection...);
}

LcgWeights<Tensor> init_lcg(const LcgConfig& cfg, Rng& rng);

/// m×d_e condition tokens for one category.
Var embed(Category category, const LcgWeights<Var>& table);
/// Stacked tokens, m rows per entry of `categories`.
Var embed_batch(std::span<const Category> categories, const LcgWeights<Var>& table);

/// Replaces `category` by Null with probability p_drop.
Category drop_condition(Category category, double p_drop, Rng& rng);

/// How the negative branch of guidance is chosen.
enum class GuidanceMode : std::uint8_t {
  ConditionalVsNull = 0,  // negative = null embedding
  CategoryContrast = 1,   // negative = the other broad category
};

Category negative_category(Category positive, GuidanceMode mode);

}  // namespace lcg
