#include "lcg/data_forge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lcg {

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

bool point_in_polygon(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) {
      inside = !inside;
    }
  }
  return inside;
}

bool covers(const SceneObject& o, double x, double y) {
  if (o.kind == ShapeKind::Polygon) return o.vertices.size() >= 3 && point_in_polygon(o.vertices, x, y);
  const double c = std::cos(o.angle), s = std::sin(o.angle);
  const double u = (x - o.cx) * c + (y - o.cy) * s;
  const double v = -(x - o.cx) * s + (y - o.cy) * c;
  if (o.kind == ShapeKind::Rectangle) return std::abs(u) <= o.rx && std::abs(v) <= o.ry;
  return (u * u) / (o.rx * o.rx) + (v * v) / (o.ry * o.ry) <= 1.0;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Color random_color(Rng& rng) { return {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}; }

SceneSpec random_spec(Rng& rng, const SceneConfig& cfg) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double side = static_cast<double>(cfg.size);
  SceneSpec spec;
  spec.background.from = random_color(rng);
  spec.background.to = random_color(rng);
  spec.background.direction = uniform(rng, 0, kTwoPi);
  spec.background.stripe_amplitude = uniform(rng, 0, 0.08);
  spec.background.stripe_frequency = uniform(rng, 1, 4);
  const std::size_t n = uniform_index(rng, cfg.min_objects, cfg.max_objects);
  for (std::size_t i = 0; i < n; ++i) {
    SceneObject o;
    o.kind = static_cast<ShapeKind>(uniform_index(rng, 0, 2));
    o.cx = uniform(rng, 0.1, 0.9) * side;
    o.cy = uniform(rng, 0.1, 0.9) * side;
    o.rx = uniform(rng, cfg.min_extent, cfg.max_extent) * side;
    o.ry = uniform(rng, cfg.min_extent, cfg.max_extent) * side;
    o.angle = uniform(rng, 0, kTwoPi);
    o.color = random_color(rng);
    if (o.kind == ShapeKind::Polygon) {
      const std::size_t k = uniform_index(rng, 3, 6);
      std::vector<double> angles(k);
      for (auto& a : angles) a = uniform(rng, 0, kTwoPi);
      std::sort(angles.begin(), angles.end());
      for (double a : angles) {
        const double r = uniform(rng, 0.6, 1.0);
        o.vertices.push_back({o.cx + r * o.rx * std::cos(a), o.cy + r * o.ry * std::sin(a)});
      }
    }
    spec.objects.push_back(std::move(o));
  }
  return spec;
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = ax + t * dx - px, ey = ay + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void paint_segment(BinaryMask& mask, double ax, double ay, double bx, double by, double radius) {
  const auto h = static_cast<double>(mask.height()), w = static_cast<double>(mask.width());
  const auto y0 = static_cast<std::size_t>(std::clamp(std::floor(std::min(ay, by) - radius), 0.0, h));
  const auto y1 = static_cast<std::size_t>(std::clamp(std::ceil(std::max(ay, by) + radius), 0.0, h));
  const auto x0 = static_cast<std::size_t>(std::clamp(std::floor(std::min(ax, bx) - radius), 0.0, w));
  const auto x1 = static_cast<std::size_t>(std::clamp(std::ceil(std::max(ax, bx) + radius), 0.0, w));
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x)
      if (segment_distance(x + 0.5, y + 0.5, ax, ay, bx, by) <= radius) mask.set(y, x, true);
}

BinaryMask draw_strokes(Rng& rng, std::size_t height, std::size_t width, const BrushConfig& cfg) {
  BinaryMask mask(height, width);
  const double side = static_cast<double>(std::min(height, width));
  const auto h = static_cast<double>(height), w = static_cast<double>(width);
  const std::size_t strokes = uniform_index(rng, cfg.min_strokes, cfg.max_strokes);
  for (std::size_t s = 0; s < strokes; ++s) {
    const std::size_t vertices = uniform_index(rng, cfg.min_vertices, cfg.max_vertices);
    const double radius = uniform(rng, cfg.min_width, cfg.max_width) * side;
    double x = uniform(rng, 0, w), y = uniform(rng, 0, h);
    double heading = uniform(rng, 0, 2.0 * std::numbers::pi);
    for (std::size_t v = 1; v < vertices; ++v) {
      heading += uniform(rng, -0.4 * std::numbers::pi, 0.4 * std::numbers::pi);
      const double len = uniform(rng, 0.1, 0.3) * side;
      const double nx = std::clamp(x + len * std::cos(heading), 0.0, w);
      const double ny = std::clamp(y + len * std::sin(heading), 0.0, h);
      paint_segment(mask, x, y, nx, ny, radius);
      x = nx;
      y = ny;
    }
  }
  return mask;
}

}  // namespace

void SceneConfig::validate() const {
  if (size == 0 || (channels != 1 && channels != 3)) {
    throw std::invalid_argument("scene: size must be positive and channels 1 or 3");
  }
  if (min_objects > max_objects) throw std::invalid_argument("scene: min_objects > max_objects");
  if (!(min_extent > 0 && min_extent <= max_extent)) {
    throw std::invalid_argument("scene: need 0 < min_extent <= max_extent");
  }
}

Scene render_scene(const SceneSpec& spec, std::size_t size, std::size_t channels) {
  Scene scene;
  scene.image = Image(size, size, channels);
  const auto side = static_cast<double>(size);
  const BackgroundSpec& bg = spec.background;
  const double c = std::cos(bg.direction), s = std::sin(bg.direction);
  std::vector<int> owner(size * size, -1);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double u = (px / side - 0.5) * c + (py / side - 0.5) * s + 0.5;
      const double v = -(px / side - 0.5) * s + (py / side - 0.5) * c;
      const double t = std::clamp(u, 0.0, 1.0);
      const double stripe =
          bg.stripe_amplitude * std::sin(2.0 * std::numbers::pi * bg.stripe_frequency * v);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        scene.image.at(y, x, ch) = quantize(bg.from[ch] + (bg.to[ch] - bg.from[ch]) * t + stripe);
      }
      for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        if (covers(spec.objects[i], px, py)) owner[y * size + x] = static_cast<int>(i);
      }
      if (owner[y * size + x] >= 0) {
        const Color& col = spec.objects[static_cast<std::size_t>(owner[y * size + x])].color;
        for (std::size_t ch = 0; ch < channels; ++ch) scene.image.at(y, x, ch) = quantize(col[ch]);
      }
    }
  }
  scene.object_masks.assign(spec.objects.size(), BinaryMask(size, size));
  scene.scene_mask = BinaryMask(size, size);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] < 0) {
      scene.scene_mask.set(i, true);
    } else {
      scene.object_masks[static_cast<std::size_t>(owner[i])].set(i, true);
    }
  }
  return scene;
}

Scene gen_scene(Rng& rng, const SceneConfig& cfg) {
  cfg.validate();
  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Scene scene = render_scene(random_spec(rng, cfg), cfg.size, cfg.channels);
    const bool visible = std::all_of(scene.object_masks.begin(), scene.object_masks.end(),
                                     [&](const BinaryMask& m) { return m.count() >= cfg.min_visible_pixels; });
    if (visible) return scene;
  }
  throw GenerationError("gen_scene: could not keep min_visible_pixels=" +
                        std::to_string(cfg.min_visible_pixels) + " for every object after " +
                        std::to_string(cfg.max_retries) + " placements");
}

Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
  Rng rng(seed);
  Scene scene = gen_scene(rng, cfg);
  scene.seed = seed;
  return scene;
}

void BrushConfig::validate() const {
  if (min_strokes > max_strokes) throw std::invalid_argument("brush: min_strokes > max_strokes");
  if (min_vertices < 2 || min_vertices > max_vertices) {
    throw std::invalid_argument("brush: need 2 <= min_vertices <= max_vertices");
  }
  if (!(min_width > 0 && min_width <= max_width)) {
    throw std::invalid_argument("brush: need 0 < min_width <= max_width");
  }
  if (!(min_ratio >= 0 && min_ratio <= max_ratio && max_ratio <= 1)) {
    throw std::invalid_argument("brush: need 0 <= min_ratio <= max_ratio <= 1");
  }
}

BinaryMask gen_brush_mask(Rng& rng, std::size_t height, std::size_t width, const BrushConfig& cfg) {
  cfg.validate();
  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    BinaryMask mask = draw_strokes(rng, height, width, cfg);
    const double cov = mask.coverage();
    if (cov >= cfg.min_ratio && cov <= cfg.max_ratio) return mask;
  }
  throw GenerationError("gen_brush_mask: coverage outside [min_ratio=" + std::to_string(cfg.min_ratio) +
                        ", max_ratio=" + std::to_string(cfg.max_ratio) + "] after " +
                        std::to_string(cfg.max_retries) + " attempts");
}

void PairConfig::validate() const {
  compose.validate();
  brush.validate();
  if (!(foreground_fraction >= 0 && foreground_fraction <= 1)) {
    throw std::invalid_argument("pairs: foreground_fraction must lie in [0, 1]");
  }
  if (!(min_coverage >= 0 && min_coverage <= max_coverage && max_coverage <= 1)) {
    throw std::invalid_argument("pairs: need 0 <= min_coverage <= max_coverage <= 1");
  }
}

std::vector<ImageMaskSample> build_pairs(std::span<const Scene> scenes, const PairConfig& cfg,
                                         std::size_t count, Rng& rng) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("build_pairs: no scenes");
  const std::size_t n = scenes.size();
  auto in_bounds = [&](const BinaryMask& m) {
    const double c = m.coverage();
    return c >= cfg.min_coverage && c <= cfg.max_coverage && m.count() > 0;
  };

  std::vector<ImageMaskSample> out;
  out.reserve(count);
  std::size_t cursor = 0;
  for (std::size_t emitted = 0; emitted < count; ++emitted) {
    const bool foreground = std::bernoulli_distribution(cfg.foreground_fraction)(rng);
    bool done = false;
    for (std::size_t tried = 0; tried < n && !done; ++tried, cursor = (cursor + 1) % n) {
      const Scene& scene = scenes[cursor];
      for (std::size_t attempt = 0; attempt < cfg.max_attempts && !done; ++attempt) {
        ImageMaskSample s;
        s.image = scene.image;
        s.seed = scene.seed;
        if (foreground) {
          if (scene.object_masks.empty()) break;
          const std::size_t k = uniform_index(rng, 0, scene.object_masks.size() - 1);
          s.mask = foreground_mask(scene.object_masks[k]);
          s.mask_kind = MaskKind::ObjectSemantic;
        } else {
          const BinaryMask brush =
              gen_brush_mask(rng, scene.image.height, scene.image.width, cfg.brush);
          BinaryMask borrowed(scene.image.height, scene.image.width);
          if (n > 1) {
            std::size_t other = uniform_index(rng, 0, n - 2);
            if (other >= cursor) ++other;
            const Scene& donor = scenes[other];
            if (!donor.object_masks.empty() && donor.image.height == scene.image.height &&
                donor.image.width == scene.image.width) {
              borrowed = donor.object_masks[uniform_index(rng, 0, donor.object_masks.size() - 1)];
            }
          }
          ComposedMask composed =
              compose_background_mask(scene.scene_mask, brush, borrowed, cfg.compose, rng);
          s.mask = std::move(composed.mask);
          if (scene.scene_mask.count() > 0) {
            s.mask_kind = MaskKind::SceneSemantic;
          } else if (composed.with_brush) {
            s.mask_kind = MaskKind::RandomBrush;
          } else {
            s.mask_kind = MaskKind::RandomObject;
          }
        }
        s.category = category_for(s.mask_kind);
        if (in_bounds(s.mask)) {
          out.push_back(std::move(s));
          done = true;
        }
      }
      if (done) cursor = (cursor + 1) % n;
      if (done) break;
    }
    if (!done) {
      throw GenerationError(std::string("build_pairs: no scene yields a ") +
                            (foreground ? "foreground" : "background") +
                            " mask with coverage in [min_coverage, max_coverage]");
    }
  }
  return out;
}

ScanReport scan_samples(std::span<const ImageMaskSample> samples, double min_coverage,
                        double max_coverage) {
  ScanReport report;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImageMaskSample& s = samples[i];
    ++report.checked;
    auto fail = [&](const std::string& what) {
      report.violations.push_back("sample " + std::to_string(i) + ": " + what);
    };
    if (s.category != category_for(s.mask_kind)) {
      fail(std::string("mask kind ") + std::string(to_string(s.mask_kind)) + " labelled " +
           std::string(to_string(s.category)));
    }
    if (s.mask.height() != s.image.height || s.mask.width() != s.image.width) {
      fail("mask resolution differs from image");
    }
    if (std::any_of(s.mask.values().begin(), s.mask.values().end(),
                    [](std::uint8_t b) { return b > 1; })) {
      fail("mask is not binary");
    }
    const double cov = s.mask.coverage();
    if (cov < min_coverage || cov > max_coverage) {
      fail("coverage " + std::to_string(cov) + " outside bounds");
    }
    if (std::any_of(s.image.pixels.begin(), s.image.pixels.end(),
                    [](double p) { return !(p >= 0.0 && p <= 1.0); })) {
      fail("pixel outside [0, 1]");
    }
  }
  return report;
}

}  // namespace lcg
