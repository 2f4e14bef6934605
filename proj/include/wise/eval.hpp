#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "wise/core.hpp"
#include "wise/inference.hpp"
#include "wise/scene.hpp"

namespace wise {

inline constexpr std::array<double, 3> kApThresholds{0.25, 0.5, 0.75};

struct Matching {
  std::vector<int> pred_to_gt;  // -1 = false positive
  std::vector<int> gt_to_pred;  // -1 = missed
  int tp = 0, fp = 0, fn = 0;
};

// Predictions in descending score order (stable by index).
inline std::vector<std::size_t> score_order(const std::vector<PredictedInstance>& preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  return order;
}

// Greedy matching: in score order, each prediction takes the unmatched
// same-class ground truth with the highest IoU, provided IoU >= threshold.
inline Matching match_instances(const std::vector<PredictedInstance>& preds,
                                const std::vector<Instance>& gts, double iou_t) {
  Matching m;
  m.pred_to_gt.assign(preds.size(), -1);
  m.gt_to_pred.assign(gts.size(), -1);
  for (std::size_t pi : score_order(preds)) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_to_pred[g] != -1 || gts[g].class_id != preds[pi].class_id) continue;
      const double iou = jaccard(preds[pi].mask, gts[g].mask);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_t) {
      m.pred_to_gt[pi] = best;
      m.gt_to_pred[best] = static_cast<int>(pi);
      ++m.tp;
    } else {
      ++m.fp;
    }
  }
  m.fn = static_cast<int>(gts.size()) - m.tp;
  return m;
}

// One image's predictions paired with its ground truth.
struct ImageEval {
  std::string image_id;
  std::vector<PredictedInstance> preds;
  std::vector<Instance> gts;
};

// Area under the precision envelope for a ranked list of hits.
inline double interpolated_ap(const std::vector<bool>& ranked_hits, int num_gt) {
  if (num_gt <= 0) return 0.0;
  const std::size_t n = ranked_hits.size();
  std::vector<double> prec(n), rec(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_hits[i];
    prec[i] = double(tp) / double(i + 1);
    rec[i] = double(tp) / num_gt;
  }
  for (std::size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rec[i] > prev_r) {
      ap += (rec[i] - prev_r) * prec[i];
      prev_r = rec[i];
    }
  }
  return ap;
}

struct ApResult {
  double mean = 0.0;
  std::map<int, double> per_class;
  int tp = 0, fp = 0, fn = 0;
};

// Dataset AP at one IoU threshold: per class, predictions from all images
// ranked by score (ties by image then prediction order); mean over classes
// with at least one ground-truth instance.
inline ApResult average_precision(const std::vector<ImageEval>& images, double iou_t) {
  std::map<int, int> gt_count;
  for (const auto& im : images)
    for (const auto& g : im.gts) ++gt_count[g.class_id];
  if (gt_count.empty())
    throw DomainError("average_precision: no ground-truth instances");

  struct Ranked {
    double score;
    std::size_t image, pred;
    bool hit;
  };
  std::map<int, std::vector<Ranked>> ranked;
  ApResult res;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Matching m = match_instances(images[i].preds, images[i].gts, iou_t);
    res.tp += m.tp;
    res.fp += m.fp;
    res.fn += m.fn;
    for (std::size_t p = 0; p < images[i].preds.size(); ++p)
      ranked[images[i].preds[p].class_id].push_back(
          {images[i].preds[p].score, i, p, m.pred_to_gt[p] >= 0});
  }
  double sum = 0.0;
  for (const auto& [cls, n_gt] : gt_count) {
    auto& list = ranked[cls];
    std::stable_sort(list.begin(), list.end(),
                     [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
    std::vector<bool> hits;
    for (const auto& r : list) hits.push_back(r.hit);
    const double ap = interpolated_ap(hits, n_gt);
    res.per_class[cls] = ap;
    sum += ap;
  }
  res.mean = sum / gt_count.size();
  return res;
}

struct Coverage {
  double mwcov = 0.0;
  double mucov = 0.0;
};

// Class-agnostic coverage: each ground-truth instance is covered by its
// best-IoU prediction in the same image.
inline Coverage coverage_metrics(const std::vector<ImageEval>& images) {
  double sum_u = 0.0, sum_w = 0.0, total_area = 0.0;
  std::size_t n = 0;
  for (const auto& im : images)
    for (const auto& g : im.gts) {
      double cov = 0.0;
      for (const auto& p : im.preds) cov = std::max(cov, jaccard(p.mask, g.mask));
      const double area = static_cast<double>(g.mask.area());
      sum_u += cov;
      sum_w += area * cov;
      total_area += area;
      ++n;
    }
  if (n == 0) throw DomainError("coverage_metrics: no ground-truth instances");
  return {total_area > 0 ? sum_w / total_area : 0.0, sum_u / n};
}

struct EvalReport {
  std::map<double, double> ap;
  std::map<int, std::map<double, double>> per_class_ap;
  double mwcov = 0.0;
  double mucov = 0.0;
  struct Counts {
    int tp = 0, fp = 0, fn = 0;
  };
  std::map<double, Counts> counts;
  int num_images = 0;
  int num_gt = 0;
};

inline EvalReport evaluate(std::vector<ImageEval> images) {
  std::sort(images.begin(), images.end(),
            [](const ImageEval& a, const ImageEval& b) { return a.image_id < b.image_id; });
  EvalReport r;
  r.num_images = static_cast<int>(images.size());
  for (const auto& im : images) r.num_gt += static_cast<int>(im.gts.size());
  for (double t : kApThresholds) {
    const ApResult ap = average_precision(images, t);
    r.ap[t] = ap.mean;
    for (const auto& [cls, v] : ap.per_class) r.per_class_ap[cls][t] = v;
    r.counts[t] = {ap.tp, ap.fp, ap.fn};
  }
  const Coverage cov = coverage_metrics(images);
  r.mwcov = cov.mwcov;
  r.mucov = cov.mucov;
  return r;
}

inline std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json ap = nlohmann::json::object(), per = nlohmann::json::object(),
                 counts = nlohmann::json::object();
  for (const auto& [t, v] : r.ap) ap[threshold_key(t)] = v;
  for (const auto& [cls, m] : r.per_class_ap) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [t, v] : m) j[threshold_key(t)] = v;
    per[std::to_string(cls)] = j;
  }
  for (const auto& [t, c] : r.counts)
    counts[threshold_key(t)] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  return {{"ap", ap},         {"per_class_ap", per}, {"mwcov", r.mwcov},
          {"mucov", r.mucov}, {"counts", counts},    {"num_images", r.num_images},
          {"num_gt", r.num_gt}};
}

inline std::string format_table_header() {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-18s %6s %6s %6s %6s %6s", "Method", "AP25",
                "AP50", "AP75", "MUCov", "MWCov");
  return buf;
}

inline std::string format_table_row(const std::string& method, const EvalReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-18s %6.1f %6.1f %6.1f %6.1f %6.1f", method.c_str(),
                100.0 * r.ap.at(0.25), 100.0 * r.ap.at(0.5), 100.0 * r.ap.at(0.75),
                100.0 * r.mucov, 100.0 * r.mwcov);
  return buf;
}

}  // namespace wise
