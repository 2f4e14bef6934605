#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wise/core.hpp"
#include "wise/lnet.hpp"
#include "wise/proposals.hpp"
#include "wise/random.hpp"

namespace wise {

// Squared-exponential kernel exp(-|a - b|^2 / (2d)).
template <typename S>
double pairwise_similarity(std::span<const S> a, std::span<const S> b, int d) {
  if (a.size() != b.size() || static_cast<int>(a.size()) != d)
    throw DomainError("pairwise_similarity: dimension mismatch");
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    sq += diff * diff;
  }
  return std::exp(-sq / (2.0 * d));
}

inline double pairwise_similarity(const std::vector<double>& a,
                                  const std::vector<double>& b, int d) {
  return pairwise_similarity<double>(std::span<const double>(a),
                                     std::span<const double>(b), d);
}

struct PseudoMaskAssignment {
  struct Object {
    std::size_t annotation = 0;      // index into the annotation set
    Mask mask;
    std::optional<std::size_t> source;  // proposal index; empty = excluded
  };
  std::vector<Object> objects;  // one per annotation, in annotation order
  Mask background;              // pixels covered by no proposal
  std::size_t excluded = 0;     // objects without an intersecting proposal

  bool retained(std::size_t i) const { return objects[i].source.has_value(); }
};

// For every annotated point, draws one proposal among those containing the
// point with probability proportional to objectness (uniform if all are
// zero). The background is everything no proposal covers.
inline PseudoMaskAssignment sample_pseudo_masks(const PointAnnotationSet& points,
                                                const ProposalSet& proposals,
                                                int height, int width, Rng& rng) {
  PseudoMaskAssignment a;
  a.background = Mask(height, width, true);
  for (const auto& p : proposals.proposals) {
    if (p.mask.height() != height || p.mask.width() != width)
      throw ShapeError("sample_pseudo_masks: proposal shape mismatch");
    for (std::size_t i = 0; i < p.mask.size(); ++i)
      if (p.mask.at(i)) a.background.set(i, false);
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    PseudoMaskAssignment::Object obj;
    obj.annotation = k;
    std::vector<std::size_t> cand;
    double total = 0.0;
    for (std::size_t j = 0; j < proposals.size(); ++j)
      if (proposals[j].mask.contains(points[k].pixel())) {
        cand.push_back(j);
        total += std::max(0.0, proposals[j].objectness);
      }
    if (cand.empty()) {
      ++a.excluded;
      a.objects.push_back(std::move(obj));
      continue;
    }
    std::size_t pick = cand.back();
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t j : cand) {
        acc += std::max(0.0, proposals[j].objectness);
        if (u < acc) {
          pick = j;
          break;
        }
      }
    } else {
      pick = cand[rng.uniform_int(0, static_cast<int>(cand.size()) - 1)];
    }
    obj.source = pick;
    obj.mask = proposals[pick].mask;
    a.objects.push_back(std::move(obj));
  }
  return a;
}

struct PixelPair {
  Pixel a;
  Pixel b;
  bool same = false;
};

struct PairSet {
  std::vector<PixelPair> pairs;
  // Set when some region had fewer than k pixels and was sampled with
  // replacement.
  bool with_replacement = false;
  // Set when the background was empty and contributed no pairs.
  bool background_skipped = false;
};

namespace detail {
inline std::vector<Pixel> sample_region(const Mask& region, int k, Rng& rng,
                                        bool* replaced) {
  std::vector<Pixel> pix = mask_pixels(region);
  std::vector<Pixel> out;
  if (pix.empty() || k <= 0) return out;
  if (static_cast<int>(pix.size()) >= k) {
    // Partial Fisher-Yates: k distinct pixels.
    for (int i = 0; i < k; ++i) {
      const int j = rng.uniform_int(i, static_cast<int>(pix.size()) - 1);
      std::swap(pix[i], pix[j]);
      out.push_back(pix[i]);
    }
  } else {
    *replaced = true;
    for (int i = 0; i < k; ++i)
      out.push_back(pix[rng.uniform_int(0, static_cast<int>(pix.size()) - 1)]);
  }
  return out;
}
}  // namespace detail

// Pairs every retained annotated point with k random pixels from each
// retained object's pseudo-mask and from the background, where k is the
// number of annotated objects. A pair is "same" iff the sample came from
// the anchor's own pseudo-mask. Pairs that would compare a pixel with
// itself as "different" are dropped.
inline PairSet build_pairs(const PointAnnotationSet& points,
                           const PseudoMaskAssignment& assignment, Rng& rng) {
  PairSet set;
  const int k = static_cast<int>(points.size());
  if (k == 0) return set;
  const bool has_background = !assignment.background.empty();
  set.background_skipped = !has_background;
  for (std::size_t ai = 0; ai < assignment.objects.size(); ++ai) {
    if (!assignment.retained(ai)) continue;
    const Pixel anchor = points[assignment.objects[ai].annotation].pixel();
    for (std::size_t ri = 0; ri < assignment.objects.size(); ++ri) {
      if (!assignment.retained(ri)) continue;
      const bool same = ri == ai;
      for (const Pixel& p : detail::sample_region(assignment.objects[ri].mask, k,
                                                  rng, &set.with_replacement)) {
        if (!same && p == anchor) continue;
        set.pairs.push_back({anchor, p, same});
      }
    }
    if (has_background)
      for (const Pixel& p :
           detail::sample_region(assignment.background, k, rng, &set.with_replacement)) {
        if (p == anchor) continue;
        set.pairs.push_back({anchor, p, false});
      }
  }
  return set;
}

template <typename S>
struct EmbeddingLoss {
  double value = 0.0;
  Tensor3<S> gradient;
  bool empty = false;  // no pairs: value 0, zero gradient
};

// Mean over pairs of -log S for same-instance pairs and -log(1 - S) for
// different-instance pairs. For same pairs -log S = |dE|^2 / (2d) exactly;
// S is clamped to [1e-6, 1 - 1e-6] only where the log would diverge.
template <typename S>
EmbeddingLoss<S> embedding_loss(const EmbeddingMap<S>& emb, const PairSet& pairs) {
  EmbeddingLoss<S> L;
  L.gradient = Tensor3<S>(emb.channels(), emb.height(), emb.width());
  if (pairs.pairs.empty()) {
    L.empty = true;
    return L;
  }
  const int d = emb.channels();
  const double inv_n = 1.0 / pairs.pairs.size();
  const double max_same = -std::log(kProbClamp);
  std::vector<double> diff(d);
  double total = 0.0;
  for (const auto& pr : pairs.pairs) {
    const Pixel a = pr.a, b = pr.b;
    if (!(a.row >= 0 && a.col >= 0 && a.row < emb.height() && a.col < emb.width() &&
          b.row >= 0 && b.col >= 0 && b.row < emb.height() && b.col < emb.width()))
      throw DomainError("embedding_loss: pair references a pixel out of bounds");
    double sq = 0.0;
    for (int c = 0; c < d; ++c) {
      diff[c] = static_cast<double>(emb(c, a.row, a.col)) - emb(c, b.row, b.col);
      sq += diff[c] * diff[c];
    }
    const double t = sq / (2.0 * d);
    double coef = 0.0;  // d(loss)/d(E_a) = coef * (E_a - E_b)
    if (pr.same) {
      if (t < max_same) {
        total += t;
        coef = 1.0 / d;
      } else {
        total += max_same;
      }
    } else {
      const double s = std::exp(-t);
      if (s > 1.0 - kProbClamp) {
        total += -std::log(kProbClamp);
      } else {
        total += -std::log1p(-s);
        coef = -s / ((1.0 - s) * d);
      }
    }
    if (coef != 0.0)
      for (int c = 0; c < d; ++c) {
        const S gc = static_cast<S>(coef * diff[c] * inv_n);
        L.gradient(c, a.row, a.col) += gc;
        L.gradient(c, b.row, b.col) -= gc;
      }
  }
  L.value = total * inv_n;
  return L;
}

// Joint objective lambda * L_L + (1 - lambda) * L_E.
inline double wise_loss(double location, double embedding, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("wise_loss: lambda must lie in [0,1]");
  return lambda * location + (1.0 - lambda) * embedding;
}

}  // namespace wise
