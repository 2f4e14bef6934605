#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "wise/core.hpp"
#include "wise/distance_transform.hpp"
#include "wise/random.hpp"

namespace wise {

struct GeneratorConfig {
  int height = 96;
  int width = 96;
  int num_classes = 3;
  int min_objects = 1;
  int max_objects = 5;
  int min_radius = 7;
  int max_radius = 13;
  // Minimum free pixels between two objects.
  int min_gap = 2;
  double noise_sigma = 0.04;
  double texture_amplitude = 0.08;
  double hue_jitter = 0.03;
  bool occlusion = false;

  void validate() const {
    if (height <= 0 || width <= 0)
      throw ConfigError("generator: image size must be positive");
    if (num_classes <= 0)
      throw ConfigError("generator: num_classes must be positive");
    if (min_objects < 0 || max_objects < min_objects)
      throw ConfigError("generator: invalid object count range");
    if (min_radius < 1 || max_radius < min_radius)
      throw ConfigError("generator: invalid radius range");
    if (2 * max_radius + 3 > std::min(height, width))
      throw ConfigError("generator: objects do not fit in the image");
    if (noise_sigma < 0.0 || texture_amplitude < 0.0)
      throw ConfigError("generator: negative noise parameters");
  }
};

enum class ShapeKind { kDisk = 0, kSquare = 1, kTriangle = 2 };

inline ShapeKind shape_for_class(int class_id) {
  return static_cast<ShapeKind>((class_id - 1) % 3);
}

struct Instance {
  Mask mask;
  int class_id = 0;
  bool operator==(const Instance&) const = default;
};

struct PointAnnotation {
  int row = 0;
  int col = 0;
  int class_id = 0;
  Pixel pixel() const { return {row, col}; }
  bool operator==(const PointAnnotation&) const = default;
};

struct SceneSample {
  std::string scene_id;
  Image image;
  std::vector<Instance> instances;
  std::vector<PointAnnotation> points;

  int height() const { return image.height(); }
  int width() const { return image.width(); }
  bool operator==(const SceneSample&) const = default;
};

namespace detail {

inline Mask rasterize_shape(ShapeKind kind, double cy, double cx, double r,
                            int height, int width) {
  Mask m(height, width);
  const double half = r * 0.85;
  // Triangle pointing up with apex (cy - r, cx) and base at cy + 0.8 r.
  const double ay = cy - r, ax = cx;
  const double by = cy + 0.8 * r, bx = cx - r;
  const double qy = cy + 0.8 * r, qx = cx + r;
  auto edge = [](double y0, double x0, double y1, double x1, double y,
                 double x) { return (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0); };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dy = y - cy, dx = x - cx;
      bool inside = false;
      switch (kind) {
        case ShapeKind::kDisk:
          inside = dy * dy + dx * dx <= r * r;
          break;
        case ShapeKind::kSquare:
          inside = std::abs(dy) <= half && std::abs(dx) <= half;
          break;
        case ShapeKind::kTriangle: {
          const double e0 = edge(ay, ax, by, bx, y, x);
          const double e1 = edge(by, bx, qy, qx, y, x);
          const double e2 = edge(qy, qx, ay, ax, y, x);
          inside = (e0 <= 0 && e1 <= 0 && e2 <= 0) ||
                   (e0 >= 0 && e1 >= 0 && e2 >= 0);
          break;
        }
      }
      if (inside) m.set(y, x);
    }
  return m;
}

inline Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  Mask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dy * dy + dx * dx > radius * radius) continue;
          const Pixel p{y + dy, x + dx};
          if (out.in_bounds(p)) out.set(p.row, p.col);
        }
    }
  return out;
}

inline Mask erode(const Mask& m, int radius) {
  if (radius <= 0) return m;
  // Erosion is the complement of the dilated complement; pixels outside
  // the image count as background.
  Mask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(y, x)) continue;
      bool keep = true;
      for (int dy = -radius; dy <= radius && keep; ++dy)
        for (int dx = -radius; dx <= radius && keep; ++dx) {
          if (dy * dy + dx * dx > radius * radius) continue;
          keep = m.contains({y + dy, x + dx});
        }
      if (keep) out.set(y, x);
    }
  return out;
}

inline bool intersects(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.at(i) && b.at(i)) return true;
  return false;
}

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (auto& ch : rgb) ch += m;
  return rgb;
}

inline float quantize8(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(clamped * 255.0)) / 255.0f;
}

}  // namespace detail

inline std::string scene_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu", index);
  return buf;
}

// Deterministic synthetic scene: disks, squares and triangles (one shape per
// class) over a smoothly textured background with additive noise. Pixel
// values are quantized to 8 bits so that PNG storage is lossless.
inline SceneSample generate_scene(std::uint64_t rng_seed,
                                  const GeneratorConfig& cfg,
                                  std::string scene_id = "scene") {
  cfg.validate();
  Rng rng(rng_seed);
  const int H = cfg.height, W = cfg.width;

  const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);

  struct Placed {
    Mask full;
    Mask visible;  // full minus later occluders
    int class_id;
  };
  std::vector<Placed> placed;
  constexpr int kRestarts = 200;
  constexpr int kTries = 200;
  bool ok = false;
  for (int restart = 0; restart < kRestarts && !ok; ++restart) {
    placed.clear();
    Mask occupied(H, W);
    ok = true;
    for (int i = 0; i < count && ok; ++i) {
      const int class_id = rng.uniform_int(1, cfg.num_classes);
      bool done = false;
      for (int t = 0; t < kTries && !done; ++t) {
        const int r = rng.uniform_int(cfg.min_radius, cfg.max_radius);
        const double cy = rng.uniform(r + 1, H - r - 2);
        const double cx = rng.uniform(r + 1, W - r - 2);
        Mask m = detail::rasterize_shape(shape_for_class(class_id), cy, cx, r,
                                         H, W);
        if (m.empty()) continue;
        if (!cfg.occlusion && detail::intersects(m, occupied)) continue;
        if (cfg.occlusion) {
          // Every earlier object keeps at least half of its area visible.
          bool hides_too_much = false;
          for (const auto& p : placed) {
            std::size_t kept = 0;
            for (std::size_t k = 0; k < m.size(); ++k)
              if (p.visible.at(k) && !m.at(k)) ++kept;
            if (kept * 2 < p.full.area()) hides_too_much = true;
          }
          if (hides_too_much) continue;
          for (auto& p : placed)
            for (std::size_t k = 0; k < m.size(); ++k)
              if (m.at(k)) p.visible.set(k, false);
        }
        placed.push_back({m, m, class_id});
        const Mask grown = detail::dilate(m, cfg.min_gap);
        for (std::size_t k = 0; k < grown.size(); ++k)
          if (grown.at(k)) occupied.set(k);
        done = true;
      }
      ok = done;
    }
  }
  if (!ok) throw ConfigError("generator: could not place objects; scene too crowded");

  SceneSample s;
  s.scene_id = std::move(scene_id);

  std::vector<Mask> visible;
  for (auto& p : placed) visible.push_back(std::move(p.visible));

  // Background: low-saturation base color with a sinusoidal texture.
  std::array<double, 3> base{};
  const double gray = rng.uniform(0.3, 0.6);
  for (auto& b : base) b = gray + rng.uniform(-0.05, 0.05);
  const double fy = rng.uniform(0.05, 0.3), fx = rng.uniform(0.05, 0.3);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  std::array<double, 3> tex_gain{};
  for (auto& g : tex_gain) g = rng.uniform(0.5, 1.0) * cfg.texture_amplitude;

  std::vector<double> pixels(static_cast<std::size_t>(3) * H * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double t = std::sin(fy * y + fx * x + phase);
      for (int c = 0; c < 3; ++c)
        pixels[(c * H + y) * W + x] = base[c] + tex_gain[c] * t;
    }

  for (std::size_t i = 0; i < placed.size(); ++i) {
    const int cls = placed[i].class_id;
    const double hue = double(cls - 1) / cfg.num_classes +
                       rng.uniform(-cfg.hue_jitter, cfg.hue_jitter);
    const auto rgb = detail::hsv_to_rgb(hue, rng.uniform(0.6, 0.85),
                                        rng.uniform(0.75, 0.95));
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (visible[i](y, x))
          for (int c = 0; c < 3; ++c) pixels[(c * H + y) * W + x] = rgb[c];
  }

  s.image = Image(3, H, W);
  for (std::size_t k = 0; k < pixels.size(); ++k)
    s.image.values()[k] =
        detail::quantize8(pixels[k] + cfg.noise_sigma * rng.normal());

  for (std::size_t i = 0; i < placed.size(); ++i) {
    const Pixel p = derive_point_annotation(visible[i]);
    s.instances.push_back({std::move(visible[i]), placed[i].class_id});
    s.points.push_back({p.row, p.col, placed[i].class_id});
  }
  return s;
}

}  // namespace wise
