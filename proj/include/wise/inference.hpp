#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wise/core.hpp"
#include "wise/enet.hpp"
#include "wise/kmeans.hpp"
#include "wise/lnet.hpp"
#include "wise/model.hpp"
#include "wise/proposals.hpp"
#include "wise/scene.hpp"

namespace wise {

struct PredictedInstance {
  Mask mask;
  int class_id = 0;
  double score = 0.0;
  Pixel seed;
  bool operator==(const PredictedInstance&) const = default;
};

struct InstanceSet {
  std::string image_id;
  std::vector<PredictedInstance> instances;
  // Number of instances where a fallback rule applied (no overlapping
  // proposal during refinement, no containing proposal for best/oracle).
  int fallbacks = 0;
};

enum class PredictMode {
  kBlobs,
  kBestProposal,
  kOracleProposal,
  kWiseRaw,
  kWiseRefined,
  kGtPointsEnet,
};

inline constexpr std::array<PredictMode, 6> kAllModes{
    PredictMode::kBlobs,   PredictMode::kBestProposal, PredictMode::kOracleProposal,
    PredictMode::kWiseRaw, PredictMode::kWiseRefined,  PredictMode::kGtPointsEnet};

inline std::string mode_name(PredictMode m) {
  switch (m) {
    case PredictMode::kBlobs: return "blobs";
    case PredictMode::kBestProposal: return "best_proposal";
    case PredictMode::kOracleProposal: return "oracle_proposal";
    case PredictMode::kWiseRaw: return "wise_raw";
    case PredictMode::kWiseRefined: return "wise_refined";
    case PredictMode::kGtPointsEnet: return "gt_points_enet";
  }
  return "unknown";
}

inline PredictMode parse_mode(const std::string& name) {
  for (PredictMode m : kAllModes)
    if (mode_name(m) == name) return m;
  throw ConfigError("unknown mode '" + name + "'");
}

inline bool mode_needs_ground_truth(PredictMode m) {
  return m == PredictMode::kOracleProposal || m == PredictMode::kGtPointsEnet;
}

// ---- Background seeds ----------------------------------------------------

struct BackgroundSeeds {
  std::vector<Pixel> pixels;
  bool clamped = false;  // k exceeded the number of background pixels
};

// Clusters background embeddings with seeded k-means (k-means++ init) and
// returns, per cluster, the member pixel nearest its centroid (ties to the
// smallest (row, col); empty clusters search the whole background).
template <typename S>
BackgroundSeeds select_background_seeds(const EmbeddingMap<S>& emb,
                                        const Mask& background, int k,
                                        std::uint64_t seed) {
  BackgroundSeeds out;
  const std::vector<Pixel> pix = mask_pixels(background);
  if (pix.empty() || k < 1) return out;
  if (k > static_cast<int>(pix.size())) {
    k = static_cast<int>(pix.size());
    out.clamped = true;
  }
  const int d = emb.channels();
  const int n = static_cast<int>(pix.size());
  std::vector<double> pts(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c)
      pts[static_cast<std::size_t>(i) * d + c] = emb(c, pix[i].row, pix[i].col);

  Rng rng(seed);
  const KMeansResult km = kmeans(pts, n, d, k, rng);

  auto dist2 = [&](int i, const std::vector<double>& c) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = pts[static_cast<std::size_t>(i) * d + j] - c[j];
      s += v * v;
    }
    return s;
  };
  // Final membership against the converged centroids.
  std::vector<int> member(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double dd = dist2(i, km.centroids[c]);
      if (dd < best_d) {
        best_d = dd;
        best = c;
      }
    }
    member[i] = best;
  }
  for (int c = 0; c < k; ++c) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    bool any_member = false;
    for (int i = 0; i < n; ++i) any_member |= member[i] == c;
    for (int i = 0; i < n; ++i) {  // raster order: first wins ties
      if (any_member && member[i] != c) continue;
      const double dd = dist2(i, km.centroids[c]);
      if (dd < best_d) {
        best_d = dd;
        best = i;
      }
    }
    out.pixels.push_back(pix[best]);
  }
  return out;
}

// ---- Grouping ------------------------------------------------------------

// Log of the squared-exponential kernel; same argmax as the kernel itself
// without underflow for distant embeddings.
struct LogKernelAffinity {
  double operator()(const double* a, const double* b, int d) const {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return -s / (2.0 * d);
  }
};

struct GroupingResult {
  InstanceSet raw;
  // Owner per pixel: object seed index, or -1 for pixels won by a
  // background seed.
  std::vector<int> owner;
};

// Assigns every pixel to the most similar seed. Object seeds come first,
// then background seeds; ties go to the lowest index. Object seed pixels
// always belong to their own object.
template <typename S, typename Affinity = LogKernelAffinity>
GroupingResult group_pixels(const EmbeddingMap<S>& emb,
                            const std::vector<LocatedObject>& objects,
                            const std::vector<Pixel>& background_seeds,
                            Affinity affinity = {}) {
  GroupingResult res;
  const int H = emb.height(), W = emb.width(), d = emb.channels();
  if (objects.empty()) return res;
  const std::size_t n_obj = objects.size();
  std::vector<std::vector<double>> seeds;
  auto vec_at = [&](int r, int c) {
    std::vector<double> v(d);
    for (int j = 0; j < d; ++j) v[j] = emb(j, r, c);
    return v;
  };
  for (const auto& o : objects) seeds.push_back(vec_at(o.row, o.col));
  for (const auto& p : background_seeds) seeds.push_back(vec_at(p.row, p.col));

  res.owner.assign(static_cast<std::size_t>(H) * W, -1);
  std::vector<double> e(d);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      for (int j = 0; j < d; ++j) e[j] = emb(j, r, c);
      std::size_t best = 0;
      double best_a = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const double a = affinity(e.data(), seeds[s].data(), d);
        if (a > best_a) {
          best_a = a;
          best = s;
        }
      }
      res.owner[static_cast<std::size_t>(r) * W + c] =
          best < n_obj ? static_cast<int>(best) : -1;
    }
  for (std::size_t i = n_obj; i-- > 0;)
    res.owner[static_cast<std::size_t>(objects[i].row) * W + objects[i].col] =
        static_cast<int>(i);

  for (std::size_t i = 0; i < n_obj; ++i) {
    PredictedInstance inst;
    inst.mask = Mask(H, W);
    inst.class_id = objects[i].class_id;
    inst.score = objects[i].confidence;
    inst.seed = objects[i].pixel();
    res.raw.instances.push_back(std::move(inst));
  }
  for (std::size_t p = 0; p < res.owner.size(); ++p)
    if (res.owner[p] >= 0) res.raw.instances[res.owner[p]].mask.set(p);
  return res;
}

// ---- Refinement ----------------------------------------------------------

// Index of the proposal with the largest Jaccard overlap (ties: higher
// objectness, then lower index), or nullopt when nothing overlaps.
inline std::optional<std::size_t> best_jaccard_proposal(const Mask& m,
                                                        const ProposalSet& proposals) {
  std::optional<std::size_t> best;
  double best_j = 0.0;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const double j = jaccard(m, proposals[i].mask);
    if (j <= 0.0) continue;
    if (!best || j > best_j ||
        (j == best_j && proposals[i].objectness > proposals[*best].objectness)) {
      best = i;
      best_j = j;
    }
  }
  return best;
}

inline InstanceSet refine_with_proposals(const InstanceSet& raw,
                                         const ProposalSet& proposals) {
  InstanceSet out = raw;
  if (proposals.empty()) {
    out.fallbacks += static_cast<int>(raw.instances.size());
    return out;
  }
  for (auto& inst : out.instances) {
    const auto best = best_jaccard_proposal(inst.mask, proposals);
    if (best)
      inst.mask = proposals[*best].mask;
    else
      ++out.fallbacks;
  }
  return out;
}

// ---- Full prediction -----------------------------------------------------

struct PredictOptions {
  std::uint64_t kmeans_seed = 0;
};

namespace detail {

inline InstanceSet instances_from_masks(const std::vector<LocatedObject>& objs,
                                        std::vector<Mask> masks) {
  InstanceSet set;
  for (std::size_t i = 0; i < objs.size(); ++i)
    set.instances.push_back(
        {std::move(masks[i]), objs[i].class_id, objs[i].confidence, objs[i].pixel()});
  return set;
}

template <typename S>
InstanceSet wise_grouping(const EmbeddingMap<S>& emb,
                          const std::vector<LocatedObject>& objects,
                          const ProposalSet& proposals, const PredictOptions& opt) {
  if (objects.empty()) return {};
  Mask covered(emb.height(), emb.width());
  for (const auto& p : proposals.proposals)
    for (std::size_t i = 0; i < p.mask.size(); ++i)
      if (p.mask.at(i)) covered.set(i);
  const Mask background = mask_complement(covered);
  const int k = std::max(1, static_cast<int>(objects.size()));
  const auto bg = select_background_seeds(emb, background, k, opt.kmeans_seed);
  return group_pixels(emb, objects, bg.pixels).raw;
}

}  // namespace detail

// Runs one member of the baseline family on precomputed network outputs.
// `gt` is required for the oracle and ground-truth-point modes.
template <typename S>
InstanceSet predict_from_outputs(const ClassScoreMap<S>& scores,
                                 const EmbeddingMap<S>& emb,
                                 const ProposalSet& proposals, PredictMode mode,
                                 const SceneSample* gt = nullptr,
                                 const PredictOptions& opt = {}) {
  if (mode_needs_ground_truth(mode) && gt == nullptr)
    throw ConfigError("mode " + mode_name(mode) + " requires ground truth");

  if (mode == PredictMode::kGtPointsEnet) {
    std::vector<LocatedObject> objs;
    for (const auto& p : gt->points) objs.push_back({p.row, p.col, p.class_id, 1.0});
    InstanceSet raw = detail::wise_grouping(emb, objs, proposals, opt);
    InstanceSet out = refine_with_proposals(raw, proposals);
    out.image_id = gt->scene_id;
    return out;
  }

  const BlobMap blobs = extract_blobs(scores);
  const std::vector<LocatedObject> objs = blobs_to_points(blobs, scores);
  InstanceSet out;
  switch (mode) {
    case PredictMode::kBlobs: {
      std::vector<Mask> masks;
      for (int b = 1; b <= blobs.count(); ++b) masks.push_back(blobs.blob_mask(b));
      out = detail::instances_from_masks(objs, std::move(masks));
      break;
    }
    case PredictMode::kBestProposal: {
      std::vector<Mask> masks;
      int fallbacks = 0;
      for (std::size_t i = 0; i < objs.size(); ++i) {
        std::optional<std::size_t> pick;
        for (std::size_t j = 0; j < proposals.size() && !pick; ++j)
          if (proposals[j].mask.contains(objs[i].pixel())) pick = j;
        if (pick) {
          masks.push_back(proposals[*pick].mask);
        } else {
          masks.push_back(blobs.blob_mask(static_cast<int>(i) + 1));
          ++fallbacks;
        }
      }
      out = detail::instances_from_masks(objs, std::move(masks));
      out.fallbacks = fallbacks;
      break;
    }
    case PredictMode::kOracleProposal: {
      // Target: the ground-truth instance under the located point (same
      // class preferred); pick the proposal with the best IoU against it.
      std::vector<Mask> masks;
      int fallbacks = 0;
      for (std::size_t i = 0; i < objs.size(); ++i) {
        const Instance* target = nullptr;
        for (const auto& g : gt->instances) {
          if (!g.mask.contains(objs[i].pixel())) continue;
          if (g.class_id == objs[i].class_id) {
            target = &g;
            break;
          }
          if (target == nullptr) target = &g;
        }
        std::optional<std::size_t> pick;
        double best = 0.0;
        if (target)
          for (std::size_t j = 0; j < proposals.size(); ++j) {
            const double iou = jaccard(proposals[j].mask, target->mask);
            if (iou > best) {
              best = iou;
              pick = j;
            }
          }
        if (pick) {
          masks.push_back(proposals[*pick].mask);
        } else {
          masks.push_back(blobs.blob_mask(static_cast<int>(i) + 1));
          ++fallbacks;
        }
      }
      out = detail::instances_from_masks(objs, std::move(masks));
      out.fallbacks = fallbacks;
      break;
    }
    case PredictMode::kWiseRaw:
      out = detail::wise_grouping(emb, objs, proposals, opt);
      break;
    case PredictMode::kWiseRefined:
      out = refine_with_proposals(detail::wise_grouping(emb, objs, proposals, opt),
                                  proposals);
      break;
    case PredictMode::kGtPointsEnet:
      break;
  }
  if (gt) out.image_id = gt->scene_id;
  return out;
}

template <typename S>
InstanceSet predict(const Network<S>& net, const Image& image,
                    const ProposalSet& proposals, PredictMode mode,
                    const SceneSample* gt = nullptr, const PredictOptions& opt = {}) {
  const auto out = net.forward(image);
  return predict_from_outputs(out.scores, out.embeddings, proposals, mode, gt, opt);
}

}  // namespace wise
