#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "test_util.hpp"
#include "wise/inference.hpp"

using namespace wise;
using wise::testing::box_mask;
using wise::testing::nearest_seed_oracle;
using wise::testing::sq_dist;

namespace {

EmbeddingMap<double> random_embedding(Rng& rng, int d, int H, int W) {
  EmbeddingMap<double> e(d, H, W);
  for (auto& v : e.values()) v = rng.normal();
  return e;
}

struct NegSquaredDistance {
  double operator()(const double* a, const double* b, int d) const {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return -s;
  }
};

struct KernelAffinity {
  double operator()(const double* a, const double* b, int d) const {
    return std::exp(LogKernelAffinity{}(a, b, d));
  }
};

ProposalSet proposals_of(std::vector<std::pair<Mask, double>> items) {
  ProposalSet set;
  for (auto& [m, o] : items) set.proposals.push_back({std::move(m), o});
  set.canonicalize();
  return set;
}

}  // namespace

// ---- select_background_seeds ---------------------------------------------

TEST(BackgroundSeeds, IdenticalEmbeddingsGiveDeterministicSeeds) {
  EmbeddingMap<double> e(2, 5, 5, 0.3);
  const Mask bg(5, 5, true);
  const auto a = select_background_seeds(e, bg, 3, 9);
  const auto b = select_background_seeds(e, bg, 3, 9);
  ASSERT_EQ(a.pixels.size(), 3u);
  EXPECT_EQ(a.pixels, b.pixels);
  for (const auto& p : a.pixels) EXPECT_TRUE(bg.contains(p));
}

TEST(BackgroundSeeds, OneSeedPerWellSeparatedCluster) {
  EmbeddingMap<double> e(2, 6, 6);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      e(0, r, c) = c < 3 ? -5.0 : 5.0;
      e(1, r, c) = 0.01 * r;
    }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = select_background_seeds(e, Mask(6, 6, true), 2, seed);
    ASSERT_EQ(s.pixels.size(), 2u);
    EXPECT_NE(s.pixels[0].col < 3, s.pixels[1].col < 3) << "seed " << seed;
  }
}

TEST(BackgroundSeeds, SingleClusterPicksPixelNearestTheMean) {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto e = random_embedding(rng, 3, 7, 7);
    const Mask bg = wise::testing::random_mask(rng, 7, 7, 0.6);
    if (bg.empty()) continue;
    const auto pix = mask_pixels(bg);
    std::vector<double> mean(3, 0.0);
    for (const auto& p : pix)
      for (int j = 0; j < 3; ++j) mean[j] += e(j, p.row, p.col) / pix.size();
    Pixel best = pix[0];
    double best_d = 1e300;
    for (const auto& p : pix) {
      double d = 0.0;
      for (int j = 0; j < 3; ++j) d += std::pow(e(j, p.row, p.col) - mean[j], 2);
      if (d < best_d) {
        best_d = d;
        best = p;
      }
    }
    const auto s = select_background_seeds(e, bg, 1, t);
    ASSERT_EQ(s.pixels.size(), 1u);
    EXPECT_EQ(s.pixels[0], best);
  }
}

TEST(BackgroundSeeds, EmptyBackgroundAndClamping) {
  EmbeddingMap<double> e(2, 3, 3, 0.0);
  EXPECT_TRUE(select_background_seeds(e, Mask(3, 3), 2, 0).pixels.empty());
  const auto s = select_background_seeds(e, box_mask(3, 3, 0, 0, 0, 1), 5, 0);
  EXPECT_TRUE(s.clamped);
  EXPECT_EQ(s.pixels.size(), 2u);
}

// ---- group_pixels -----------------------------------------------------------

TEST(GroupPixels, SoleObjectSeedTakesTheWholeImage) {
  Rng rng(1);
  const auto e = random_embedding(rng, 4, 5, 6);
  const auto g = group_pixels(e, {{2, 3, 1, 0.8}}, {});
  ASSERT_EQ(g.raw.instances.size(), 1u);
  EXPECT_EQ(g.raw.instances[0].mask, Mask(5, 6, true));
  EXPECT_EQ(g.raw.instances[0].class_id, 1);
  EXPECT_DOUBLE_EQ(g.raw.instances[0].score, 0.8);
}

TEST(GroupPixels, NoObjectSeedsGiveEmptySet) {
  EmbeddingMap<double> e(2, 3, 3, 0.0);
  EXPECT_TRUE(group_pixels(e, {}, {{0, 0}}).raw.instances.empty());
}

TEST(GroupPixels, TwoConstantRegionsAreRecovered) {
  EmbeddingMap<double> e(2, 6, 6);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      e(0, r, c) = r < 2 ? 1.0 : -1.0;
      e(1, r, c) = r < 2 ? 0.0 : 2.0;
    }
  const auto g = group_pixels(e, {{0, 0, 1, 0.9}, {4, 4, 2, 0.9}}, {});
  EXPECT_EQ(g.raw.instances[0].mask, box_mask(6, 6, 0, 0, 1, 5));
  EXPECT_EQ(g.raw.instances[1].mask, box_mask(6, 6, 2, 0, 5, 5));
}

TEST(GroupPixels, EquidistantPixelGoesToLowerSeed) {
  EmbeddingMap<double> e(1, 1, 3);
  e(0, 0, 0) = -1.0;
  e(0, 0, 1) = 0.0;
  e(0, 0, 2) = 1.0;
  const auto g = group_pixels(e, {{0, 0, 1, 0.5}, {0, 2, 1, 0.5}}, {});
  EXPECT_EQ(g.owner, (std::vector<int>{0, 0, 1}));
  const auto h = group_pixels(e, {{0, 0, 1, 0.5}}, {{0, 2}});
  EXPECT_EQ(h.owner, (std::vector<int>{0, 0, -1}));
}

TEST(GroupPixels, MatchesBruteForceAndPartitionsTheImage) {
  Rng rng(404);
  for (int t = 0; t < 100; ++t) {
    const auto e = random_embedding(rng, 4, 16, 16);
    std::vector<LocatedObject> objs;
    std::set<std::pair<int, int>> used;
    const int n_obj = rng.uniform_int(1, 5), n_bg = rng.uniform_int(0, 5);
    while (static_cast<int>(objs.size()) < n_obj) {
      const int r = rng.uniform_int(0, 15), c = rng.uniform_int(0, 15);
      if (used.insert({r, c}).second) objs.push_back({r, c, rng.uniform_int(1, 3), rng.uniform()});
    }
    std::vector<Pixel> bg;
    while (static_cast<int>(bg.size()) < n_bg) {
      const int r = rng.uniform_int(0, 15), c = rng.uniform_int(0, 15);
      if (used.insert({r, c}).second) bg.push_back({r, c});
    }
    const auto g = group_pixels(e, objs, bg);
    ASSERT_EQ(g.owner, nearest_seed_oracle(e, objs, bg)) << "trial " << t;
    for (int p = 0; p < 256; ++p) {
      int owners = g.owner[p] < 0 ? 1 : 0;
      for (const auto& inst : g.raw.instances) owners += inst.mask.at(p) ? 1 : 0;
      EXPECT_EQ(owners, 1);
    }
    for (std::size_t i = 0; i < objs.size(); ++i)
      EXPECT_TRUE(g.raw.instances[i].mask.contains(objs[i].pixel()));
    EXPECT_EQ(group_pixels(e, objs, bg, NegSquaredDistance{}).owner, g.owner);
  }
}

TEST(GroupPixels, KernelAndLogKernelAgreeAwayFromUnderflow) {
  Rng rng(405);
  for (int t = 0; t < 20; ++t) {
    auto e = random_embedding(rng, 4, 16, 16);
    for (auto& v : e.values()) v *= 0.3;
    const std::vector<LocatedObject> objs{{1, 1, 1, 0.5}, {10, 12, 2, 0.5}};
    const std::vector<Pixel> bg{{5, 5}, {14, 2}};
    EXPECT_EQ(group_pixels(e, objs, bg, KernelAffinity{}).owner,
              group_pixels(e, objs, bg).owner);
  }
}

// ---- refine_with_proposals -------------------------------------------------

TEST(Refine, IdenticalProposalIsSelected) {
  const Mask m = box_mask(8, 8, 2, 2, 4, 4);
  InstanceSet raw;
  raw.instances.push_back({m, 2, 0.7, {3, 3}});
  const auto props = proposals_of({{box_mask(8, 8, 0, 0, 7, 7), 0.9}, {m, 0.1}});
  const auto out = refine_with_proposals(raw, props);
  EXPECT_EQ(out.instances[0].mask, m);
  EXPECT_EQ(out.instances[0].class_id, 2);
  EXPECT_DOUBLE_EQ(out.instances[0].score, 0.7);
  EXPECT_EQ(out.fallbacks, 0);
}

TEST(Refine, LargestJaccardWins) {
  // Raw mask: cols 0..6 of a 1x20 strip.
  const Mask raw_mask = box_mask(1, 20, 0, 0, 0, 6);
  const Mask p02 = box_mask(1, 20, 0, 5, 0, 9);  // 2 / 10
  const Mask p07 = box_mask(1, 20, 0, 0, 0, 9);  // 7 / 10
  const Mask p05 = box_mask(1, 20, 0, 2, 0, 9);  // 5 / 10
  const auto props = proposals_of({{p02, 0.9}, {p07, 0.8}, {p05, 0.7}});
  EXPECT_DOUBLE_EQ(jaccard(raw_mask, props[0].mask), 0.2);
  EXPECT_DOUBLE_EQ(jaccard(raw_mask, props[1].mask), 0.7);
  EXPECT_DOUBLE_EQ(jaccard(raw_mask, props[2].mask), 0.5);
  EXPECT_EQ(best_jaccard_proposal(raw_mask, props), std::optional<std::size_t>(1));
}

TEST(Refine, TieGoesToHigherObjectnessThenLowerIndex) {
  const Mask raw_mask = box_mask(1, 6, 0, 2, 0, 3);
  const Mask left = box_mask(1, 6, 0, 1, 0, 3), right = box_mask(1, 6, 0, 2, 0, 4);
  EXPECT_EQ(best_jaccard_proposal(raw_mask, proposals_of({{left, 0.4}, {right, 0.6}})),
            std::optional<std::size_t>(0));
  ProposalSet same;
  same.proposals = {{left, 0.5}, {right, 0.5}};
  EXPECT_EQ(best_jaccard_proposal(raw_mask, same), std::optional<std::size_t>(0));
}

TEST(Refine, DisjointProposalsKeepTheRawMask) {
  const Mask m = box_mask(6, 6, 0, 0, 1, 1);
  InstanceSet raw;
  raw.instances.push_back({m, 1, 0.5, {0, 0}});
  const auto out = refine_with_proposals(raw, proposals_of({{box_mask(6, 6, 4, 4, 5, 5), 0.9}}));
  EXPECT_EQ(out.instances[0].mask, m);
  EXPECT_EQ(out.fallbacks, 1);
  const auto none = refine_with_proposals(raw, ProposalSet{});
  EXPECT_EQ(none.instances, raw.instances);
  EXPECT_EQ(none.fallbacks, 1);
}

TEST(Refine, SelectedProposalMaximizesJaccardByEnumeration) {
  Rng rng(33);
  for (int t = 0; t < 100; ++t) {
    ProposalSet props;
    for (int k = 0; k < 6; ++k)
      props.proposals.push_back({wise::testing::random_mask(rng, 6, 6, 0.4), rng.uniform()});
    props.canonicalize();
    InstanceSet raw;
    raw.instances.push_back({wise::testing::random_mask(rng, 6, 6, 0.4), 1, 0.5, {0, 0}});
    const auto out = refine_with_proposals(raw, props);
    double best = 0.0;
    for (const auto& p : props.proposals)
      best = std::max(best, jaccard(raw.instances[0].mask, p.mask));
    if (best > 0.0) {
      EXPECT_EQ(jaccard(raw.instances[0].mask, out.instances[0].mask), best);
    }
  }
}

// ---- predict_from_outputs --------------------------------------------------

TEST(Predict, BlobsOnAllBackgroundGivesEmptySet) {
  ClassScoreMap<double> s(3, 8, 8, 0.0);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) s(0, r, c) = 1.0;
  EmbeddingMap<double> e(2, 8, 8, 0.0);
  for (auto mode : kAllModes)
    if (!mode_needs_ground_truth(mode)) {
      EXPECT_TRUE(predict_from_outputs(s, e, ProposalSet{}, mode).instances.empty());
    }
}

TEST(Predict, OracleProposalRecoversTheGroundTruthMask) {
  const Mask gt_mask = box_mask(8, 8, 2, 2, 5, 5);
  SceneSample gt;
  gt.scene_id = "scene_x";
  gt.image = Image(3, 8, 8);
  gt.instances.push_back({gt_mask, 1});
  gt.points.push_back({3, 3, 1});
  ClassScoreMap<double> s(2, 8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const bool fg = r == 3 && c == 3;
      s(1, r, c) = fg ? 0.9 : 0.1;
      s(0, r, c) = 1.0 - s(1, r, c);
    }
  EmbeddingMap<double> e(2, 8, 8, 0.0);
  const auto props = proposals_of({{box_mask(8, 8, 0, 0, 7, 7), 0.9}, {gt_mask, 0.2}});
  const auto out = predict_from_outputs(s, e, props, PredictMode::kOracleProposal, &gt);
  ASSERT_EQ(out.instances.size(), 1u);
  EXPECT_EQ(jaccard(out.instances[0].mask, gt_mask), 1.0);
  EXPECT_EQ(out.image_id, "scene_x");
  // best_proposal takes the highest-objectness proposal containing the point.
  const auto best = predict_from_outputs(s, e, props, PredictMode::kBestProposal, &gt);
  EXPECT_EQ(best.instances[0].mask, Mask(8, 8, true));
}

TEST(Predict, GroundTruthModesRequireGroundTruth) {
  ClassScoreMap<double> s(2, 4, 4, 0.5);
  EmbeddingMap<double> e(2, 4, 4, 0.0);
  EXPECT_THROW(predict_from_outputs(s, e, ProposalSet{}, PredictMode::kOracleProposal),
               ConfigError);
  EXPECT_THROW(predict_from_outputs(s, e, ProposalSet{}, PredictMode::kGtPointsEnet),
               ConfigError);
}

TEST(Predict, GroundTruthPointsScoreOne) {
  SceneSample gt;
  gt.image = Image(3, 6, 6);
  gt.instances.push_back({box_mask(6, 6, 0, 0, 2, 2), 1});
  gt.points.push_back({1, 1, 1});
  ClassScoreMap<double> s(2, 6, 6, 0.5);
  EmbeddingMap<double> e(2, 6, 6, 0.0);
  const auto out = predict_from_outputs(s, e, ProposalSet{}, PredictMode::kGtPointsEnet, &gt);
  ASSERT_EQ(out.instances.size(), 1u);
  EXPECT_EQ(out.instances[0].score, 1.0);
  EXPECT_EQ(out.instances[0].seed, (Pixel{1, 1}));
}

TEST(Predict, ModeNamesRoundTrip) {
  for (auto m : kAllModes) EXPECT_EQ(parse_mode(mode_name(m)), m);
  EXPECT_THROW(parse_mode("proposals"), ConfigError);
}
