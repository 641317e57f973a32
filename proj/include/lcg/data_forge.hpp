#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcg/codec.hpp"
#include "lcg/conditioning.hpp"
#include "lcg/random.hpp"

namespace lcg {

/// Raised when random generation cannot meet its constraints within the retry budget.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ShapeKind : std::uint8_t { Ellipse, Rectangle, Polygon };

using Color = std::array<double, 3>;

struct SceneObject {
  ShapeKind kind = ShapeKind::Ellipse;
  double cx = 0, cy = 0;    // centre, pixels
  double rx = 0, ry = 0;    // half extents, pixels
  double angle = 0;         // radians
  std::vector<std::array<double, 2>> vertices;  // polygon only, pixel coordinates
  Color color{};
};

struct BackgroundSpec {
  Color from{}, to{};
  double direction = 0;       // gradient direction, radians
  double stripe_amplitude = 0;
  double stripe_frequency = 0;  // cycles per image side
};

/// Later objects sit on top of earlier ones.
struct SceneSpec {
  BackgroundSpec background;
  std::vector<SceneObject> objects;
};

struct Scene {
  Image image;
  std::vector<BinaryMask> object_masks;  // pairwise disjoint after z-order
  BinaryMask scene_mask;                 // complement of the object union
  std::uint64_t seed = 0;
};

struct SceneConfig {
  std::size_t size = 32;
  std::size_t channels = 3;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  double min_extent = 0.15;  // object half extent as a fraction of the side
  double max_extent = 0.35;
  std::size_t min_visible_pixels = 12;
  std::size_t max_retries = 64;
  void validate() const;
};

/// Rasterizes a spec. Pixel values are quantized to k/255.
Scene render_scene(const SceneSpec& spec, std::size_t size, std::size_t channels = 3);

/// Random scene whose objects each keep at least `min_visible_pixels` after occlusion.
Scene gen_scene(Rng& rng, const SceneConfig& cfg);
Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg);

struct BrushConfig {
  std::size_t min_strokes = 1;
  std::size_t max_strokes = 4;
  std::size_t min_vertices = 4;
  std::size_t max_vertices = 8;
  // Paint radius around the stroke centreline, as a fraction of the image side.
  double min_width = 0.04;
  double max_width = 0.12;
  double min_ratio = 0.05;
  double max_ratio = 0.6;
  std::size_t max_retries = 100;
  void validate() const;
};

/// Union of random-walk polyline strokes, regenerated until coverage lies in
/// [min_ratio, max_ratio]. max_strokes == 0 yields an empty mask.
BinaryMask gen_brush_mask(Rng& rng, std::size_t height, std::size_t width, const BrushConfig& cfg);

struct ImageMaskSample {
  Image image;
  BinaryMask mask;
  Category category = Category::Background;
  MaskKind mask_kind = MaskKind::SceneSemantic;
  std::uint64_t seed = 0;  // seed of the source scene

  friend bool operator==(const ImageMaskSample&, const ImageMaskSample&) = default;
};

struct PairConfig {
  MaskComposeConfig compose;
  BrushConfig brush;
  double foreground_fraction = 4.3 / 14.0;  // fg:bg = 4.3:9.7
  double min_coverage = 0.02;
  double max_coverage = 0.9;
  std::size_t max_attempts = 8;  // per scene before moving to the next one
  void validate() const;
};

/// Emits `count` samples. The category of each sample is drawn first; a
/// foreground sample takes one object mask, a background sample composes the
/// scene mask with a brush mask and an object mask borrowed from another scene.
std::vector<ImageMaskSample> build_pairs(std::span<const Scene> scenes, const PairConfig& cfg,
                                         std::size_t count, Rng& rng);

struct ScanReport {
  std::size_t checked = 0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the mask-kind → category mapping, mask binarity and resolution,
/// coverage bounds, and pixel range of every sample.
ScanReport scan_samples(std::span<const ImageMaskSample> samples, double min_coverage,
                        double max_coverage);

}  // namespace lcg
