#include <cmath>

#include <gtest/gtest.h>

#include "gestalt/continuity.hpp"
#include "gestalt/error.hpp"
#include "gestalt/random.hpp"

using namespace gestalt;

namespace {

ViTConfig coarse_config() {
  ViTConfig c;
  c.patch_size = 32;
  c.n_layers = 2;
  c.n_heads = 2;
  c.width = 32;
  c.mlp_ratio = 2;
  return c;
}

PatchGrid grid_with_perimeter(std::vector<int> perimeter) {
  PatchGrid g;
  g.patch_size = 16;
  g.rows = g.cols = 14;
  g.object_patches = {perimeter};
  g.perimeter_patches = {std::move(perimeter)};
  return g;
}

void softmax_row(MatrixF& m, int row, std::vector<double> logits) {
  double z = 0;
  for (double l : logits) z += std::exp(l);
  for (std::size_t k = 0; k < logits.size(); ++k) m(row, static_cast<Eigen::Index>(k)) = static_cast<float>(std::exp(logits[k]) / z);
}

}  // namespace

TEST(FloorLaw, Examples) {
  EXPECT_DOUBLE_EQ(floored_ratio(2.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(floored_ratio(0.8, 0.1), 8.0);
  EXPECT_DOUBLE_EQ(floored_ratio(1.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(floored_ratio(0.3, 0.3), 1.0);
  EXPECT_DOUBLE_EQ(floored_ratio(0.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(floored_ratio(0.5, 0.0), 0.5 / 1e-30);
}

TEST(FloorLaw, RandomPairs) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(0, 1), b = rng.uniform(1e-6, 1);
    const double s = floored_ratio(a, b);
    EXPECT_GE(s, 1.0);
    EXPECT_DOUBLE_EQ(s, a > b ? a / b : 1.0);
  }
}

TEST(NeighborSet, EightAdjacentPerimeterPatches) {
  const int n = 14;
  // Ring around (5,5) plus one far patch.
  const PatchGrid g = grid_with_perimeter({4 * n + 4, 4 * n + 5, 4 * n + 6, 5 * n + 4, 5 * n + 6, 6 * n + 6, 5 * n + 5, 10 * n});
  EXPECT_EQ(neighbor_set(g, 5 * n + 5, 0), (std::vector<int>{4 * n + 4, 4 * n + 5, 4 * n + 6, 5 * n + 4, 5 * n + 6, 6 * n + 6}));
  EXPECT_TRUE(neighbor_set(g, 10 * n, 0).empty());
  // Corner of the grid has at most three neighbours and no wrap-around.
  const PatchGrid corner = grid_with_perimeter({0, 1, n, n + 1, n - 1, 2 * n - 1});
  EXPECT_EQ(neighbor_set(corner, 0, 0), (std::vector<int>{1, n, n + 1}));
  EXPECT_THROW(neighbor_set(g, 0, 1), ConfigError);
}

TEST(MaxNeighborAttention, HandSoftmax) {
  AttentionRecord a(1, 1, 3);
  MatrixF& m = a.map(0, 0);
  m.resize(3, 3);
  softmax_row(m, 0, {0, 0, 0});
  softmax_row(m, 1, {0, std::log(2.0), std::log(3.0)});
  softmax_row(m, 2, {std::log(4.0), 0, 0});
  const int both[] = {1, 2};
  EXPECT_NEAR(max_neighbor_attention(a, 0, 0, both, 0), 4.0 / 6.0, 1e-7);
  const int one[] = {1};
  EXPECT_NEAR(max_neighbor_attention(a, 0, 0, one, 0), 1.0 / 6.0, 1e-7);
  EXPECT_NEAR(max_neighbor_attention(a, 0, 0, one, 2), 3.0 / 6.0, 1e-7);
  EXPECT_THROW(max_neighbor_attention(a, 0, 0, std::span<const int>{}, 0), DataError);
}

// ---------------------------------------------------------------------------
// Statistics

TEST(Stats, AverageRanks) {
  const double v[] = {10, 20, 20, 5, 30};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2, 3.5, 3.5, 1, 5}));
}

TEST(Stats, SmallCorrelation) {
  const double a[] = {1, 2, 3, 4, 5};
  const double b[] = {2, 1, 4, 3, 5};
  const Correlation p = pearson(a, b);
  EXPECT_NEAR(p.r, 0.8, 1e-12);
  EXPECT_NEAR(p.p, 0.10408803866182799, 1e-9);
  EXPECT_NEAR(spearman(a, b).r, 0.8, 1e-12);
}

TEST(Stats, TiesAndLongerSeries) {
  const double a[] = {1, 2, 2, 3, 10};
  const double b[] = {1, 3, 2, 4, 5};
  EXPECT_NEAR(pearson(a, b).r, 0.8237544710479139, 1e-12);
  EXPECT_NEAR(pearson(a, b).p, 0.08643365382790559, 1e-9);
  EXPECT_NEAR(spearman(a, b).r, 0.9746794344808963, 1e-12);
  EXPECT_NEAR(spearman(a, b).p, 0.004818230468198566, 1e-9);
  const double c[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const double d[] = {2, 1, 4, 3, 6, 5, 8, 7, 10, 9};
  EXPECT_NEAR(pearson(c, d).r, 0.9393939393939392, 1e-12);
  EXPECT_NEAR(pearson(c, d).p, 5.484052998513713e-05, 1e-11);
}

TEST(Stats, PerfectAndDegenerateCases) {
  Rng rng(2);
  std::vector<double> a(30), neg(30);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.normal();
    neg[i] = -a[i];
  }
  EXPECT_NEAR(pearson(a, a).r, 1.0, 1e-12);
  EXPECT_NEAR(spearman(a, a).r, 1.0, 1e-12);
  EXPECT_NEAR(pearson(a, neg).r, -1.0, 1e-12);
  EXPECT_GT(pearson(a, a).p, 0.0);
  EXPECT_LT(pearson(a, a).p, 1e-12);
  const std::vector<double> flat(30, 1.0);
  EXPECT_THROW(pearson(a, flat), NumericError);
  const double two[] = {1, 2};
  EXPECT_THROW(pearson(two, two), ConfigError);
  EXPECT_DOUBLE_EQ(correlation_p_value(0.0, 10), 1.0);
}

TEST(Stats, CorrelateScoreMatrices) {
  HeadScoreMatrix a, b;
  a.scores.resize(2, 2);
  b.scores.resize(2, 2);
  a.scores << 1, 2, 3, 4;
  b.scores << 2, 4, 6, 9;
  a.dataset = "blobs";
  b.dataset = "curves";
  const CorrelationReport r = correlate_scores(a, b);
  EXPECT_EQ(r.n, 4u);
  EXPECT_NEAR(r.spearman.r, 1.0, 1e-12);
  EXPECT_EQ(r.dataset_b, "curves");
  b.scores.resize(1, 4);
  EXPECT_THROW(correlate_scores(a, b), ConfigError);
}

TEST(TuningCurve, ReadsOneHeadAcrossTheSweep) {
  std::vector<HeadScoreMatrix> sweep(3);
  for (int i = 0; i < 3; ++i) {
    sweep[static_cast<std::size_t>(i)].t = (i - 1) * 4;
    sweep[static_cast<std::size_t>(i)].scores = Eigen::MatrixXd::Constant(2, 2, 1.0 + i);
    sweep[static_cast<std::size_t>(i)].n_used = static_cast<std::size_t>(5 + i);
  }
  sweep[1].scores(1, 0) = 9.0;
  const SensitivityCurve c = tuning_curve(sweep, {1, 0});
  EXPECT_EQ(c.t, (std::vector<int>{-4, 0, 4}));
  EXPECT_EQ(c.S, (std::vector<double>{1.0, 9.0, 3.0}));
  EXPECT_EQ(c.n, (std::vector<std::size_t>{5, 6, 7}));
  EXPECT_THROW(tuning_curve(sweep, {2, 0}), ConfigError);
}

// ---------------------------------------------------------------------------
// Sensitivity on an untrained encoder

TEST(Sensitivity, ScoresAreFlooredAndReproducible) {
  const ViTModel model = ViTModel::init_untrained(1, coarse_config());
  std::vector<Stimulus> stimuli;
  for (std::uint64_t s = 0; s < 4; ++s) stimuli.push_back(gen_blob(s, {}));
  const int ts[] = {-8, 0, 8};
  ContinuityOptions opt;
  opt.max_targets = 3;
  opt.seed = 5;
  const auto sweep = continuity_sweep(model, stimuli, ts, opt);
  ASSERT_EQ(sweep.size(), 3u);
  for (const auto& m : sweep) {
    EXPECT_EQ(m.scores.rows(), 2);
    EXPECT_EQ(m.scores.cols(), 2);
    EXPECT_GE(m.scores.minCoeff(), 1.0);
    EXPECT_EQ(m.n_used + m.n_skipped, 4u);
  }
  std::vector<Stimulus> reversed(stimuli.rbegin(), stimuli.rend());
  opt.jobs = 2;
  const auto again = continuity_sweep(model, reversed, ts, opt);
  for (std::size_t i = 0; i < sweep.size(); ++i) EXPECT_EQ(again[i].scores, sweep[i].scores);
  const HeadScoreMatrix h = head_scores(model, stimuli, opt);
  EXPECT_EQ(h.t, 0);
  EXPECT_EQ(h.scores, sweep[1].scores);
}

TEST(Sensitivity, PooledAndMaxOverRotationsStayFloored) {
  const ViTModel model = ViTModel::init_untrained(2, coarse_config());
  const Stimulus s = gen_curve(3, {});
  const int ts[] = {0};
  for (Aggregation agg : {Aggregation::per_patch, Aggregation::pooled})
    for (ControlMode mode : {ControlMode::random_rotation, ControlMode::max_over_rotations}) {
      ContinuityOptions opt;
      opt.aggregation = agg;
      opt.control = mode;
      const StimulusSensitivity r = stimulus_sensitivity(model, s, ts, opt, 11);
      ASSERT_EQ(r.scores.size(), 1u);
      ASSERT_GT(r.scores[0].size(), 0);
      EXPECT_GE(r.scores[0].minCoeff(), 1.0);
      EXPECT_FALSE(r.targets_used.empty());
    }
}

TEST(Sensitivity, ObjectWithoutPerimeterIsSkipped) {
  const ViTModel model = ViTModel::init_untrained(2, coarse_config());
  Stimulus s;
  s.image = Image(kCanvasSize, kCanvasSize, Rgb{255, 255, 255});
  s.background = Rgb{0, 0, 0};
  s.object_masks = {Mask(kCanvasSize, kCanvasSize, true)};
  const int ts[] = {0};
  EXPECT_TRUE(stimulus_sensitivity(model, s, ts, {}, 0).scores.empty());
}
