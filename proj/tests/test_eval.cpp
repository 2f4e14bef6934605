#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "test_util.hpp"
#include "wise/eval.hpp"

using namespace wise;
using wise::testing::box_mask;

namespace {

PredictedInstance pred(Mask m, int cls, double score) {
  return {std::move(m), cls, score, {0, 0}};
}

// Strip masks in a 1 x 100 image: [c0, c1].
Mask strip(int c0, int c1) { return box_mask(1, 100, 0, c0, 0, c1); }

// AP by definition: step through every rank, precision envelope from the
// right, area under recall steps. Independent of interpolated_ap.
double ap_by_definition(const std::vector<bool>& hits, int num_gt) {
  const int n = static_cast<int>(hits.size());
  std::vector<double> p(n), r(n);
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    tp += hits[i];
    p[i] = double(tp) / (i + 1);
    r[i] = double(tp) / num_gt;
  }
  double ap = 0.0;
  for (int i = 0; i < n; ++i) {
    const double prev = i == 0 ? 0.0 : r[i - 1];
    if (r[i] == prev) continue;
    double env = 0.0;
    for (int j = i; j < n; ++j) env = std::max(env, p[j]);
    ap += (r[i] - prev) * env;
  }
  return ap;
}

}  // namespace

// ---- match_instances --------------------------------------------------------

TEST(Match, IdenticalPredictionIsTruePositive) {
  const auto m = match_instances({pred(strip(0, 9), 1, 0.5)}, {{strip(0, 9), 1}}, 0.5);
  EXPECT_EQ(m.tp, 1);
  EXPECT_EQ(m.fp, 0);
  EXPECT_EQ(m.fn, 0);
}

TEST(Match, LowOverlapIsFalsePositiveAndFalseNegative) {
  // IoU = 4 / 10.
  const auto m = match_instances({pred(strip(0, 6), 1, 0.5)}, {{strip(3, 9), 1}}, 0.5);
  ASSERT_NEAR(jaccard(strip(0, 6), strip(3, 9)), 0.4, 1e-12);
  EXPECT_EQ(m.tp, 0);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.fn, 1);
}

TEST(Match, HigherScoreClaimsTheGroundTruthFirst) {
  const Mask gt = strip(0, 9);
  const Mask a = strip(0, 7);  // IoU 0.8, score 0.9
  const Mask b = strip(0, 8);  // IoU 0.9, score 0.8
  const auto m = match_instances({pred(b, 1, 0.8), pred(a, 1, 0.9)}, {{gt, 1}}, 0.5);
  EXPECT_EQ(m.pred_to_gt, (std::vector<int>{-1, 0}));
  EXPECT_EQ(m.tp, 1);
  EXPECT_EQ(m.fp, 1);
}

TEST(Match, ClassesMustAgree) {
  const auto m = match_instances({pred(strip(0, 9), 2, 0.5)}, {{strip(0, 9), 1}}, 0.5);
  EXPECT_EQ(m.tp, 0);
}

// ---- average_precision -------------------------------------------------------

TEST(AveragePrecision, HandComputedThreePredictionCase) {
  ImageEval im{"a", {}, {{strip(0, 9), 1}, {strip(20, 29), 1}}};
  im.preds = {pred(strip(0, 9), 1, 0.9), pred(strip(50, 59), 1, 0.8),
              pred(strip(20, 29), 1, 0.7)};
  EXPECT_NEAR(average_precision({im}, 0.5).mean, 1.0 * 0.5 + (2.0 / 3.0) * 0.5, 1e-9);
  EXPECT_NEAR(interpolated_ap({true, false, true}, 2), 0.8333333333333334, 1e-9);
}

TEST(AveragePrecision, PerfectPredictionsGiveOneAtEveryThreshold) {
  Rng rng(8);
  std::vector<ImageEval> images;
  for (int i = 0; i < 5; ++i) {
    ImageEval im{"img" + std::to_string(i), {}, {}};
    for (int k = 0; k < 3; ++k) {
      const Mask m = strip(k * 20, k * 20 + 10 + i);
      im.gts.push_back({m, 1 + k % 2});
      im.preds.push_back(pred(m, 1 + k % 2, rng.uniform()));
    }
    images.push_back(im);
  }
  for (double t : kApThresholds) EXPECT_EQ(average_precision(images, t).mean, 1.0);
}

TEST(AveragePrecision, NoPredictionsGiveZero) {
  const ImageEval im{"a", {}, {{strip(0, 9), 1}}};
  const auto r = average_precision({im}, 0.5);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.fn, 1);
}

TEST(AveragePrecision, NoGroundTruthIsAnError) {
  const ImageEval im{"a", {pred(strip(0, 9), 1, 0.5)}, {}};
  EXPECT_THROW(average_precision({im}, 0.5), DomainError);
}

TEST(AveragePrecision, MeanIsOverClassesPresentInGroundTruth) {
  // Class 1 perfect, class 2 missed, class 3 only predicted (ignored).
  ImageEval im{"a", {}, {{strip(0, 9), 1}, {strip(20, 29), 2}}};
  im.preds = {pred(strip(0, 9), 1, 0.9), pred(strip(40, 49), 3, 0.95)};
  const auto r = average_precision({im}, 0.5);
  EXPECT_DOUBLE_EQ(r.mean, 0.5);
  EXPECT_EQ(r.per_class.size(), 2u);
}

TEST(AveragePrecision, StrongMatchesAreThresholdInsensitive) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    ImageEval im{"a", {}, {}};
    for (int k = 0; k < 4; ++k) {
      im.gts.push_back({strip(k * 25, k * 25 + 19), 1});
      if (rng.uniform() < 0.7) {
        const int shrink = rng.uniform_int(0, 3);  // IoU >= 16/20
        im.preds.push_back(pred(strip(k * 25, k * 25 + 19 - shrink), 1, rng.uniform()));
      }
    }
    im.preds.push_back(pred(strip(95, 99), 1, rng.uniform()));
    const double a25 = average_precision({im}, 0.25).mean;
    EXPECT_EQ(a25, average_precision({im}, 0.5).mean);
    EXPECT_EQ(a25, average_precision({im}, 0.75).mean);
  }
}

TEST(AveragePrecision, MatchesRankingOracleOnToySets) {
  // Distinct scores: the ranking is unique, and AP must equal the definition
  // applied to that ranking, whatever order the predictions are listed in.
  Rng rng(99);
  for (int t = 0; t < 200; ++t) {
    ImageEval im{"a", {}, {}};
    const int n_gt = rng.uniform_int(1, 3), n_pred = rng.uniform_int(0, 5);
    for (int g = 0; g < n_gt; ++g) im.gts.push_back({strip(g * 30, g * 30 + 9), 1});
    std::vector<double> scores(n_pred);
    std::iota(scores.begin(), scores.end(), 1.0);
    for (int i = n_pred - 1; i > 0; --i) std::swap(scores[i], scores[rng.uniform_int(0, i)]);
    for (int p = 0; p < n_pred; ++p) {
      const int g = rng.uniform_int(0, 2);
      const int jitter = rng.uniform_int(0, 12);
      im.preds.push_back(pred(strip(g * 30 + jitter, g * 30 + 9 + jitter), 1, scores[p] / 10));
    }
    const Matching m = match_instances(im.preds, im.gts, 0.5);
    std::vector<std::size_t> order(n_pred);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return im.preds[a].score > im.preds[b].score; });
    std::vector<bool> hits;
    for (auto i : order) hits.push_back(m.pred_to_gt[i] >= 0);
    const double expected = ap_by_definition(hits, n_gt);
    EXPECT_NEAR(average_precision({im}, 0.5).mean, expected, 1e-12) << "trial " << t;
    std::reverse(im.preds.begin(), im.preds.end());
    EXPECT_NEAR(average_precision({im}, 0.5).mean, expected, 1e-12);
  }
}

TEST(AveragePrecision, CountsSatisfyTpPlusFnEqualsGt) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    ImageEval im{"a", {}, {}};
    for (int g = 0; g < 3; ++g) im.gts.push_back({strip(g * 30, g * 30 + 9), 1 + g % 2});
    for (int p = 0; p < 4; ++p) {
      const int s = rng.uniform_int(0, 80);
      im.preds.push_back(pred(strip(s, s + 9), rng.uniform_int(1, 2), rng.uniform()));
    }
    for (double th : kApThresholds) {
      const auto r = average_precision({im}, th);
      EXPECT_EQ(r.tp + r.fn, 3);
      EXPECT_EQ(r.tp + r.fp, 4);
      EXPECT_GE(r.mean, 0.0);
      EXPECT_LE(r.mean, 1.0);
    }
  }
}

// ---- coverage_metrics ---------------------------------------------------------

TEST(Coverage, HandComputedExample) {
  // GT sizes 10 and 30; covs 1.0 and 0.5.
  ImageEval im{"a", {}, {{strip(0, 9), 1}, {strip(20, 49), 1}}};
  im.preds = {pred(strip(0, 9), 2, 0.1), pred(strip(20, 34), 1, 0.1)};
  const auto c = coverage_metrics({im});
  EXPECT_NEAR(c.mucov, 0.75, 1e-9);
  EXPECT_NEAR(c.mwcov, 0.625, 1e-9);
}

TEST(Coverage, PerfectAndEmptyPredictions) {
  ImageEval im{"a", {}, {{strip(0, 9), 1}, {strip(20, 49), 2}}};
  EXPECT_EQ(coverage_metrics({im}).mucov, 0.0);
  EXPECT_EQ(coverage_metrics({im}).mwcov, 0.0);
  im.preds = {pred(strip(0, 9), 1, 0.1), pred(strip(20, 49), 2, 0.1)};
  EXPECT_EQ(coverage_metrics({im}).mucov, 1.0);
  EXPECT_EQ(coverage_metrics({im}).mwcov, 1.0);
}

TEST(Coverage, EqualSizedInstancesGiveEqualMetrics) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    ImageEval im{"a", {}, {}};
    for (int g = 0; g < 3; ++g) im.gts.push_back({strip(g * 30, g * 30 + 11), 1});
    for (int p = 0; p < 3; ++p) {
      const int s = rng.uniform_int(0, 85);
      im.preds.push_back(pred(strip(s, s + rng.uniform_int(0, 14)), 1, 0.5));
    }
    const auto c = coverage_metrics({im});
    EXPECT_NEAR(c.mucov, c.mwcov, 1e-12);
  }
}

TEST(Coverage, NoGroundTruthIsAnError) {
  EXPECT_THROW(coverage_metrics({ImageEval{"a", {}, {}}}), DomainError);
}

// ---- evaluate / report --------------------------------------------------------

TEST(Evaluate, ReportIsIndependentOfImageOrder) {
  std::vector<ImageEval> images;
  Rng rng(2);
  for (int i = 0; i < 6; ++i) {
    ImageEval im{"s" + std::to_string(i), {}, {{strip(0, 9), 1}}};
    im.preds.push_back(pred(strip(rng.uniform_int(0, 5), 12), 1, rng.uniform()));
    images.push_back(im);
  }
  const auto a = to_json(evaluate(images));
  std::reverse(images.begin(), images.end());
  EXPECT_EQ(a.dump(), to_json(evaluate(images)).dump());
  EXPECT_EQ(a["num_images"], 6);
  EXPECT_TRUE(a["ap"].contains("0.50"));
}

TEST(Evaluate, TableRowLayout) {
  ImageEval im{"a", {pred(strip(0, 9), 1, 0.5)}, {{strip(0, 9), 1}}};
  const std::string row = format_table_row("wise_refined", evaluate({im}));
  EXPECT_EQ(row, "wise_refined        100.0  100.0  100.0  100.0  100.0");
  EXPECT_EQ(format_table_header().size(), row.size());
}
