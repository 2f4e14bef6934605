#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "wise/core.hpp"
#include "wise/scene.hpp"

namespace wise {

// Point annotations (the ground truth T of the location loss).
using PointAnnotationSet = std::vector<PointAnnotation>;

inline constexpr double kProbClamp = 1e-6;

// 8-neighbourhood offsets, used for blobs and watershed alike.
inline constexpr std::array<std::array<int, 2>, 8> kNeighbors8{{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

struct BlobMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;      // 0 = background, 1..B = blob ids
  std::vector<int> blob_class;  // blob_class[b - 1] = predicted class of blob b

  int count() const { return static_cast<int>(blob_class.size()); }
  int label(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
  Mask blob_mask(int blob) const {
    Mask m(height, width);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == blob) m.set(i);
    return m;
  }
};

struct LocatedObject {
  int row = 0;
  int col = 0;
  int class_id = 0;
  double confidence = 0.0;
  Pixel pixel() const { return {row, col}; }
};

inline void validate_annotations(const PointAnnotationSet& points, int height,
                                 int width, int num_classes) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.row < 0 || p.col < 0 || p.row >= height || p.col >= width)
      throw DomainError("annotation (" + std::to_string(p.row) + "," +
                        std::to_string(p.col) + ") out of bounds");
    if (p.class_id < 1 || p.class_id > num_classes)
      throw DomainError("annotation class " + std::to_string(p.class_id) +
                        " outside 1.." + std::to_string(num_classes));
    for (std::size_t j = 0; j < i; ++j)
      if (points[j].row == p.row && points[j].col == p.col)
        throw DomainError("duplicate annotation coordinates");
  }
}

// Per-pixel argmax over channels (ties to the lowest channel index).
template <typename S>
std::vector<int> argmax_channels(const ClassScoreMap<S>& scores) {
  const std::size_t plane = scores.plane();
  std::vector<int> arg(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    S best = scores.data()[i];
    for (int c = 1; c < scores.channels(); ++c) {
      const S v = scores.data()[c * plane + i];
      if (v > best) {
        best = v;
        arg[i] = c;
      }
    }
  }
  return arg;
}

// Foreground (argmax != 0) pixels grouped into 8-connected components per
// class. Blob ids follow raster order of each blob's first pixel.
template <typename S>
BlobMap extract_blobs(const ClassScoreMap<S>& scores) {
  const int H = scores.height(), W = scores.width();
  const auto arg = argmax_channels(scores);
  BlobMap bm{H, W, std::vector<int>(static_cast<std::size_t>(H) * W, 0), {}};
  std::vector<int> stack;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * W + c;
      if (arg[i] == 0 || bm.labels[i] != 0) continue;
      const int cls = arg[i];
      const int id = bm.count() + 1;
      bm.blob_class.push_back(cls);
      bm.labels[i] = id;
      stack.assign(1, static_cast<int>(i));
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int pr = p / W, pc = p % W;
        for (const auto& [dr, dc] : kNeighbors8) {
          const int nr = pr + dr, nc = pc + dc;
          if (nr < 0 || nc < 0 || nr >= H || nc >= W) continue;
          const std::size_t n = static_cast<std::size_t>(nr) * W + nc;
          if (bm.labels[n] != 0 || arg[n] != cls) continue;
          bm.labels[n] = id;
          stack.push_back(static_cast<int>(n));
        }
      }
    }
  return bm;
}

// One located object per blob, at the pixel maximizing the blob-class score
// (ties to the smallest (row, col)).
template <typename S>
std::vector<LocatedObject> blobs_to_points(const BlobMap& blobs,
                                           const ClassScoreMap<S>& scores) {
  std::vector<LocatedObject> out(blobs.count());
  std::vector<bool> seen(blobs.count(), false);
  for (int r = 0; r < blobs.height; ++r)
    for (int c = 0; c < blobs.width; ++c) {
      const int b = blobs.label(r, c);
      if (b == 0) continue;
      const int cls = blobs.blob_class[b - 1];
      const double s = static_cast<double>(scores(cls, r, c));
      if (!seen[b - 1] || s > out[b - 1].confidence) {
        out[b - 1] = {r, c, cls, s};
        seen[b - 1] = true;
      }
    }
  return out;
}

// Marker-based watershed restricted to `region`: flooding proceeds from
// the seeds in order of increasing elevation (FIFO among equal heights),
// using 8-connectivity. Returns per-pixel labels (seed index + 1; 0 outside
// the region or unreached).
inline std::vector<int> watershed(const std::vector<double>& elevation,
                                  const Mask& region,
                                  const std::vector<Pixel>& seeds) {
  const int H = region.height(), W = region.width();
  std::vector<int> label(static_cast<std::size_t>(H) * W, 0);
  struct Item {
    double h;
    std::uint64_t order;
    int index;
    bool operator>(const Item& o) const {
      return h > o.h || (h == o.h && order > o.order);
    }
  };
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  std::uint64_t counter = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const int i = seeds[s].row * W + seeds[s].col;
    if (!region.at(i) || label[i] != 0) continue;
    label[i] = static_cast<int>(s) + 1;
    pq.push({elevation[i], counter++, i});
  }
  while (!pq.empty()) {
    const Item it = pq.top();
    pq.pop();
    const int pr = it.index / W, pc = it.index % W;
    for (const auto& [dr, dc] : kNeighbors8) {
      const int nr = pr + dr, nc = pc + dc;
      if (nr < 0 || nc < 0 || nr >= H || nc >= W) continue;
      const int n = nr * W + nc;
      if (!region.at(n) || label[n] != 0) continue;
      label[n] = label[it.index];
      pq.push({elevation[n], counter++, n});
    }
  }
  return label;
}

// Pixels of the region with an 8-neighbour (inside the region) carrying a
// different watershed label.
inline Mask watershed_boundaries(const std::vector<int>& label,
                                 const Mask& region) {
  const int H = region.height(), W = region.width();
  Mask b(H, W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const int i = r * W + c;
      if (!region.at(i)) continue;
      for (const auto& [dr, dc] : kNeighbors8) {
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nc < 0 || nr >= H || nc >= W) continue;
        const int n = nr * W + nc;
        if (region.at(n) && label[n] != label[i]) {
          b.set(i);
          break;
        }
      }
    }
  return b;
}

template <typename S>
struct LocationLoss {
  double image_level = 0.0;   // L_I
  double point_level = 0.0;   // L_P
  double split_level = 0.0;   // L_S
  double false_positive = 0.0;  // L_F
  Tensor3<S> gradient;        // d(total)/d(scores)

  double total() const {
    return image_level + point_level + split_level + false_positive;
  }
};

namespace detail {

// -log(clamp(p)) and its derivative w.r.t. p (zero where clamped).
inline double neg_log(double p, double* dp) {
  const double lo = kProbClamp, hi = 1.0 - kProbClamp;
  if (p < lo) {
    *dp = 0.0;
    return -std::log(lo);
  }
  if (p > hi) {
    *dp = 0.0;
    return -std::log(hi);
  }
  *dp = -1.0 / p;
  return -std::log(p);
}

// -log(1 - clamp(p)) and its derivative w.r.t. p.
inline double neg_log_complement(double p, double* dp) {
  const double lo = kProbClamp, hi = 1.0 - kProbClamp;
  if (p < lo) {
    *dp = 0.0;
    return -std::log(1.0 - lo);
  }
  if (p > hi) {
    *dp = 0.0;
    return -std::log(1.0 - hi);
  }
  *dp = 1.0 / (1.0 - p);
  return -std::log(1.0 - p);
}

}  // namespace detail

// Counting-style localization loss over point annotations; sum of
// image-level, point-level, split-level and false-positive terms, each
// averaged over its contributing elements. Blobs and watershed partitions
// are treated as constants when differentiating.
template <typename S>
LocationLoss<S> location_loss(const ClassScoreMap<S>& scores,
                              const PointAnnotationSet& points) {
  const int H = scores.height(), W = scores.width();
  const int C1 = scores.channels();
  validate_annotations(points, H, W, C1 - 1);
  LocationLoss<S> L;
  L.gradient = Tensor3<S>(C1, H, W);
  auto& g = L.gradient;
  const std::size_t plane = scores.plane();

  // Image-level: per channel, binary cross-entropy of the spatial max
  // against "class present" (background always present).
  {
    std::vector<bool> present(C1, false);
    present[0] = true;
    for (const auto& p : points) present[p.class_id] = true;
    double sum = 0.0;
    for (int c = 0; c < C1; ++c) {
      const S* ch = scores.channel(c);
      std::size_t arg = 0;
      for (std::size_t i = 1; i < plane; ++i)
        if (ch[i] > ch[arg]) arg = i;
      double dp = 0.0;
      sum += present[c] ? detail::neg_log(ch[arg], &dp)
                        : detail::neg_log_complement(ch[arg], &dp);
      g.channel(c)[arg] += static_cast<S>(dp / C1);
    }
    L.image_level = sum / C1;
  }

  // Point-level: annotated class probability at each point.
  if (!points.empty()) {
    double sum = 0.0;
    const double w = 1.0 / points.size();
    for (const auto& p : points) {
      double dp = 0.0;
      sum += detail::neg_log(scores(p.class_id, p.row, p.col), &dp);
      g(p.class_id, p.row, p.col) += static_cast<S>(dp * w);
    }
    L.point_level = sum * w;
  }

  const BlobMap blobs = extract_blobs(scores);
  std::vector<std::vector<Pixel>> blob_points(blobs.count());
  for (const auto& p : points) {
    const int b = blobs.label(p.row, p.col);
    if (b != 0 && blobs.blob_class[b - 1] == p.class_id)
      blob_points[b - 1].push_back(p.pixel());
  }

  // Split-level: watershed-separate blobs holding several points and push
  // the separating boundary towards background.
  for (int b = 1; b <= blobs.count(); ++b) {
    const auto& seeds = blob_points[b - 1];
    if (seeds.size() < 2) continue;
    const Mask region = blobs.blob_mask(b);
    const int cls = blobs.blob_class[b - 1];
    std::vector<double> elevation(plane);
    for (std::size_t i = 0; i < plane; ++i)
      elevation[i] = -static_cast<double>(scores.channel(cls)[i]);
    const auto ws = watershed(elevation, region, seeds);
    const Mask boundary = watershed_boundaries(ws, region);
    const std::size_t n = boundary.area();
    if (n == 0) continue;
    const double weight = static_cast<double>(seeds.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!boundary.at(i)) continue;
      double dp = 0.0;
      sum += detail::neg_log(scores.channel(0)[i], &dp);
      g.channel(0)[i] += static_cast<S>(weight * dp / n);
    }
    L.split_level += weight * sum / n;
  }

  // False positives: blobs without any point of their class go to
  // background.
  {
    std::size_t n = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const int b = blobs.labels[i];
      if (b != 0 && blob_points[b - 1].empty()) ++n;
    }
    if (n > 0) {
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const int b = blobs.labels[i];
        if (b == 0 || !blob_points[b - 1].empty()) continue;
        double dp = 0.0;
        sum += detail::neg_log(scores.channel(0)[i], &dp);
        g.channel(0)[i] += static_cast<S>(dp / n);
      }
      L.false_positive = sum / n;
    }
  }
  return L;
}

}  // namespace wise
