#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "wise/core.hpp"
#include "wise/random.hpp"
#include "wise/scene.hpp"

namespace wise {

struct Proposal {
  Mask mask;
  double objectness = 0.0;
  bool operator==(const Proposal&) const = default;
};

// Class-agnostic proposal masks, sorted by descending objectness.
struct ProposalSet {
  std::vector<Proposal> proposals;

  std::size_t size() const { return proposals.size(); }
  bool empty() const { return proposals.empty(); }
  const Proposal& operator[](std::size_t i) const { return proposals[i]; }
  bool operator==(const ProposalSet&) const = default;

  void canonicalize() {
    std::stable_sort(proposals.begin(), proposals.end(),
                     [](const Proposal& a, const Proposal& b) {
                       return a.objectness > b.objectness;
                     });
  }
  bool is_canonical() const {
    for (std::size_t i = 1; i < proposals.size(); ++i)
      if (proposals[i - 1].objectness < proposals[i].objectness) return false;
    return true;
  }
};

struct ProposalConfig {
  int proposals_per_object = 8;
  double min_iou = 0.3;
  double max_iou = 0.95;
  int distractors = 5;
  double objectness_noise = 0.2;
  // With jitter off every object gets exactly its ground-truth mask.
  bool jitter = true;

  void validate() const {
    if (proposals_per_object < 1)
      throw ConfigError("proposals: proposals_per_object must be >= 1");
    if (!(min_iou > 0.0 && min_iou <= max_iou && max_iou <= 1.0))
      throw ConfigError("proposals: need 0 < min_iou <= max_iou <= 1");
    if (distractors < 0) throw ConfigError("proposals: negative distractors");
    if (objectness_noise < 0.0 || objectness_noise > 1.0)
      throw ConfigError("proposals: objectness_noise must be in [0,1]");
  }
};

namespace detail {

inline Mask shift_mask(const Mask& m, int dy, int dx) {
  Mask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(y, x) && out.in_bounds({y + dy, x + dx})) out.set(y + dy, x + dx);
  return out;
}

struct Box {
  int r0, c0, r1, c1;  // inclusive
};

inline Box bounding_box(const Mask& m) {
  Box b{m.height(), m.width(), -1, -1};
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(y, x)) {
        b.r0 = std::min(b.r0, y);
        b.c0 = std::min(b.c0, x);
        b.r1 = std::max(b.r1, y);
        b.c1 = std::max(b.c1, x);
      }
  return b;
}

inline void fill_box(Mask& m, Box b) {
  b.r0 = std::max(b.r0, 0);
  b.c0 = std::max(b.c0, 0);
  b.r1 = std::min(b.r1, m.height() - 1);
  b.c1 = std::min(b.c1, m.width() - 1);
  for (int y = b.r0; y <= b.r1; ++y)
    for (int x = b.c0; x <= b.c1; ++x) m.set(y, x);
}

inline Mask unite(const Mask& a, const Mask& b) {
  Mask out = a;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b.at(i)) out.set(i);
  return out;
}

// One random corruption of a ground-truth mask, imitating the typical
// failure modes of a segment proposal method: loose or tight boundaries,
// misalignment, partial coverage, box-like masks, leakage into the
// background and merges with neighbouring objects.
inline Mask perturb(const Mask& gt, const SceneSample& scene,
                    std::size_t self, Rng& rng) {
  const int op = rng.uniform_int(0, 6);
  switch (op) {
    case 0:
      return dilate(gt, rng.uniform_int(1, 2));
    case 1:
      return erode(gt, rng.uniform_int(1, 3));
    case 2:
      return shift_mask(gt, rng.uniform_int(-3, 3), rng.uniform_int(-3, 3));
    case 3: {
      // Keep one side of a random line through a point near the centroid.
      const Box b = bounding_box(gt);
      const double cy = 0.5 * (b.r0 + b.r1) + rng.uniform(-2, 2);
      const double cx = 0.5 * (b.c0 + b.c1) + rng.uniform(-2, 2);
      const double th = rng.uniform(0.0, 6.283185307179586);
      const double ny = std::sin(th), nx = std::cos(th);
      const double offset = rng.uniform(-0.3, 0.5) *
                            std::max(b.r1 - b.r0, b.c1 - b.c0);
      Mask out(gt.height(), gt.width());
      for (int y = 0; y < gt.height(); ++y)
        for (int x = 0; x < gt.width(); ++x)
          if (gt(y, x) && (y - cy) * ny + (x - cx) * nx <= offset)
            out.set(y, x);
      return out;
    }
    case 4: {
      Mask out(gt.height(), gt.width());
      fill_box(out, bounding_box(gt));
      return out;
    }
    case 5: {
      const Box b = bounding_box(gt);
      const int hh = rng.uniform_int(2, 6), ww = rng.uniform_int(2, 6);
      const int y = rng.uniform_int(b.r0 - hh, b.r1);
      const int x = rng.uniform_int(b.c0 - ww, b.c1);
      Mask extra(gt.height(), gt.width());
      fill_box(extra, {y, x, y + hh, x + ww});
      return unite(gt, extra);
    }
    default: {
      // Merge with the nearest other instance, if any.
      if (scene.instances.size() < 2) return dilate(gt, 2);
      const Box b = bounding_box(gt);
      const double cy = 0.5 * (b.r0 + b.r1), cx = 0.5 * (b.c0 + b.c1);
      std::size_t best = self;
      double best_d = 1e300;
      for (std::size_t j = 0; j < scene.instances.size(); ++j) {
        if (j == self) continue;
        const Box o = bounding_box(scene.instances[j].mask);
        const double dy = 0.5 * (o.r0 + o.r1) - cy;
        const double dx = 0.5 * (o.c0 + o.c1) - cx;
        if (dy * dy + dx * dx < best_d) {
          best_d = dy * dy + dx * dx;
          best = j;
        }
      }
      return unite(gt, scene.instances[best].mask);
    }
  }
}

inline double best_instance_iou(const Mask& m, const SceneSample& scene) {
  double best = 0.0;
  for (const auto& inst : scene.instances)
    best = std::max(best, jaccard(m, inst.mask));
  return best;
}

}  // namespace detail

// Synthetic stand-in for a class-agnostic segment proposal method. Each
// object receives jittered copies of its mask (the first always covers its
// point annotation); distractors are placed in the background. Objectness
// is the true best IoU plus bounded uniform noise, clamped to [0,1].
inline constexpr double kIouTolerance = 0.05;

inline ProposalSet synthesize_proposals(const SceneSample& scene,
                                        std::uint64_t rng_seed,
                                        const ProposalConfig& cfg) {
  cfg.validate();
  Rng rng(rng_seed);
  const int H = scene.height(), W = scene.width();
  ProposalSet set;

  auto score = [&](const Mask& m) {
    const double iou = detail::best_instance_iou(m, scene);
    const double noise = cfg.objectness_noise > 0.0
                             ? rng.uniform(-cfg.objectness_noise,
                                           cfg.objectness_noise)
                             : 0.0;
    return std::clamp(iou + noise, 0.0, 1.0);
  };

  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    const Mask& gt = scene.instances[i].mask;
    const Pixel point = scene.points[i].pixel();
    if (!cfg.jitter) {
      set.proposals.push_back({gt, 0.0});
      set.proposals.back().objectness = score(gt);
      continue;
    }
    for (int k = 0; k < cfg.proposals_per_object; ++k) {
      // Target IoU drawn uniformly over the configured range; perturbations
      // are compounded until the mask degrades to within reach of it.
      const double target = rng.uniform(cfg.min_iou, cfg.max_iou);
      Mask chosen;
      double chosen_gap = 1e300;
      constexpr int kTries = 40;
      for (int t = 0; t < kTries && chosen_gap > kIouTolerance; ++t) {
        Mask m = detail::perturb(gt, scene, i, rng);
        for (int step = 0; step < 4 && !m.empty() && jaccard(m, gt) > target + kIouTolerance;
             ++step)
          m = detail::perturb(m, scene, i, rng);
        if (m.empty()) continue;
        if (k == 0 && !m.contains(point)) continue;
        const double iou = jaccard(m, gt);
        if (iou < cfg.min_iou || iou > cfg.max_iou) continue;
        if (std::abs(iou - target) < chosen_gap) {
          chosen_gap = std::abs(iou - target);
          chosen = std::move(m);
        }
      }
      if (chosen.size() == 0) chosen = detail::dilate(gt, 1);
      const double obj = score(chosen);
      set.proposals.push_back({std::move(chosen), obj});
    }
  }

  const Mask occupied = [&] {
    Mask u(H, W);
    for (const auto& inst : scene.instances)
      for (std::size_t k = 0; k < inst.mask.size(); ++k)
        if (inst.mask.at(k)) u.set(k);
    return u;
  }();
  for (int k = 0; k < cfg.distractors; ++k) {
    constexpr int kTries = 100;
    for (int t = 0; t < kTries; ++t) {
      const int hh = rng.uniform_int(4, 16), ww = rng.uniform_int(4, 16);
      const int y = rng.uniform_int(0, std::max(0, H - hh));
      const int x = rng.uniform_int(0, std::max(0, W - ww));
      Mask m(H, W);
      const bool ellipse = rng.uniform() < 0.5;
      const double cy = y + 0.5 * (hh - 1), cx = x + 0.5 * (ww - 1);
      for (int r = y; r < std::min(H, y + hh); ++r)
        for (int c = x; c < std::min(W, x + ww); ++c) {
          const double dy = (r - cy) / (0.5 * hh), dx = (c - cx) / (0.5 * ww);
          if (!ellipse || dy * dy + dx * dx <= 1.0) m.set(r, c);
        }
      if (m.empty() || detail::intersects(m, occupied)) continue;
      const double obj = score(m);
      set.proposals.push_back({std::move(m), obj});
      break;
    }
  }

  set.canonicalize();
  return set;
}

}  // namespace wise
