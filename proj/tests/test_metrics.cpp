#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfmia/errors.hpp"
#include "rfmia/metrics.hpp"
#include "rfmia/rng.hpp"
#include "rfmia/synth_data.hpp"
#include "test_support.hpp"

namespace rfmia {
namespace {

using Scores = std::vector<double>;

double brute_auc(const Scores& m, const Scores& n) {
  double c = 0;
  for (double a : m)
    for (double b : n) c += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
  return c / static_cast<double>(m.size() * n.size());
}

double brute_tpr(const Scores& m, const Scores& n, double level) {
  Scores taus = m;
  taus.insert(taus.end(), n.begin(), n.end());
  taus.push_back(-std::numeric_limits<double>::infinity());
  double best = 0.0;
  for (double tau : taus) {
    const double fp = static_cast<double>(std::count_if(n.begin(), n.end(), [&](double s) { return s <= tau; }));
    const double tp = static_cast<double>(std::count_if(m.begin(), m.end(), [&](double s) { return s <= tau; }));
    if (fp / static_cast<double>(n.size()) <= level) best = std::max(best, tp / static_cast<double>(m.size()));
  }
  return best;
}

// Random table with deliberate ties (scores on a coarse grid).
std::pair<Scores, Scores> random_table(Rng& rng) {
  const std::size_t nm = 1 + rng.below(100), nn = 1 + rng.below(100);
  const double shift = rng.uniform(-1, 1);
  Scores m(nm), n(nn);
  for (double& s : m) s = std::round(8 * rng.normal()) / 8;
  for (double& s : n) s = std::round(8 * (rng.normal() + shift)) / 8;
  return {m, n};
}

TEST(Auc, HandExamples) {
  EXPECT_EQ(auc(Scores{1, 2}, Scores{3, 4}), 1.0);
  EXPECT_EQ(auc(Scores{1, 3}, Scores{2, 4}), 0.75);
  EXPECT_EQ(auc(Scores{1, 2, 2, 5}, Scores{5, 2, 1, 2}), 0.5);
}

TEST(Auc, MatchesBruteForceConcordanceOnFiftyTables) {
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto [m, n] = random_table(rng);
    EXPECT_EQ(auc(m, n), brute_auc(m, n)) << "table " << k;
  }
}

TEST(Auc, SingleClassIsArgumentError) {
  EXPECT_THROW(auc(Scores{}, Scores{1}), ArgumentError);
  EXPECT_THROW(auc(Scores{1}, Scores{}), ArgumentError);
}

TEST(Auc, InvariantUnderStrictlyMonotoneTransforms) {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    auto [m, n] = random_table(rng);
    const double base = auc(m, n);
    auto apply = [](Scores s, double (*f)(double)) {
      for (double& v : s) v = f(v);
      return s;
    };
    auto cube = [](double v) { return v * v * v; };
    auto exp_ = [](double v) { return std::exp(v); };
    EXPECT_EQ(auc(apply(m, cube), apply(n, cube)), base);
    EXPECT_EQ(auc(apply(m, exp_), apply(n, exp_)), base);
  }
}

TEST(TprAtFpr, PerfectSeparationIsOneAtAnyLevel) {
  for (double level : {0.001, 0.01, 0.5, 0.99}) EXPECT_EQ(tpr_at_fpr(Scores{1, 2}, Scores{3, 4}, level), 1.0);
}

TEST(TprAtFpr, LevelBelowOneOverNAllowsNoFalsePositives) {
  Scores n(100);
  for (std::size_t i = 0; i < 100; ++i) n[i] = 10.0 + static_cast<double>(i);
  const Scores m = {1, 5, 10, 11, 50};  // two below the smallest nonmember
  EXPECT_EQ(tpr_at_fpr(m, n, 0.009), 0.4);
}

TEST(TprAtFpr, OneAllowedFalsePositive) {
  // Nonmembers 2.5, 5, 6, ..., 103 (100 values). At level 0.01 one false
  // positive is allowed, so the threshold may sit just below 5: all four
  // members are admitted.
  Scores n = {2.5};
  for (int v = 5; v <= 103; ++v) n.push_back(v);
  ASSERT_EQ(n.size(), 100u);
  const Scores m = {1, 2, 3, 4};
  EXPECT_EQ(tpr_at_fpr(m, n, 0.01), 1.0);
  EXPECT_EQ(brute_tpr(m, n, 0.01), 1.0);
  // With no false positive allowed only members below 2.5 count.
  EXPECT_EQ(tpr_at_fpr(m, n, 0.009), 0.5);
}

TEST(TprAtFpr, MatchesThresholdEnumerationExactly) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const auto [m, n] = random_table(rng);
    for (double level : {0.01, 0.05, 0.1, 0.3}) {
      EXPECT_EQ(tpr_at_fpr(m, n, level), brute_tpr(m, n, level)) << "table " << k << " level " << level;
    }
  }
}

TEST(TprAtFpr, MonotoneInLevel) {
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const auto [m, n] = random_table(rng);
    double prev = 0.0;
    for (double level = 0.005; level < 1.0; level += 0.005) {
      const double v = tpr_at_fpr(m, n, level);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(TprAtFpr, LevelOutsideOpenIntervalIsRejected) {
  EXPECT_THROW(tpr_at_fpr(Scores{1}, Scores{2}, 0.0), ArgumentError);
  EXPECT_THROW(tpr_at_fpr(Scores{1}, Scores{2}, 1.0), ArgumentError);
}

TEST(Correlation, AffineRelationIsPerfect) {
  const Scores xs = {0.3, -1, 2, 5, 7.5};
  Scores ys;
  for (double x : xs) ys.push_back(2 * x + 3);
  EXPECT_NEAR(pearson(xs, ys), 1.0, 1e-15);
  EXPECT_NEAR(spearman(xs, ys), 1.0, 1e-15);
}

TEST(Correlation, NegativeCube) {
  const Scores xs = {-2, -1, 0.5, 1, 3, 4};
  Scores ys;
  for (double x : xs) ys.push_back(-x * x * x);
  EXPECT_NEAR(spearman(xs, ys), -1.0, 1e-15);
  const double p = pearson(xs, ys);
  EXPECT_GT(p, -1.0);
  EXPECT_LT(p, 0.0);
}

TEST(Correlation, SpearmanHandExample) { EXPECT_NEAR(spearman(Scores{1, 2, 3, 4}, Scores{2, 1, 4, 3}), 0.6, 1e-15); }

TEST(Correlation, AverageRanksWithTies) {
  EXPECT_EQ(average_ranks(Scores{10, 20, 20, 5}), (Scores{2, 3.5, 3.5, 1}));
}

TEST(Correlation, SpearmanInvariantUnderMonotoneTransforms) {
  Rng rng(5);
  Scores xs(40), ys(40);
  for (std::size_t i = 0; i < 40; ++i) {
    xs[i] = rng.normal();
    ys[i] = xs[i] + rng.normal();
  }
  const double base = spearman(xs, ys);
  Scores ex = xs, cy = ys;
  for (double& v : ex) v = std::exp(v);
  for (double& v : cy) v = v * v * v;
  EXPECT_NEAR(spearman(ex, ys), base, 1e-14);
  EXPECT_NEAR(spearman(xs, cy), base, 1e-14);
}

TEST(Correlation, ZeroVarianceIsError) {
  EXPECT_THROW(pearson(Scores{1, 1, 1}, Scores{1, 2, 3}), NumericError);
  EXPECT_THROW(pearson(Scores{1, 2}, Scores{1}), ArgumentError);
}

using Samples = std::vector<std::vector<double>>;

TEST(Mmd, IdenticalSetsAreAtMostZero) {
  Rng rng(6);
  Samples a(30);
  for (auto& x : a) x = rng.normal_vector(4);
  EXPECT_LE(mmd_fidelity(a, a), 1e-12);
  EXPECT_LE(mmd_fidelity(a, a, 1.0), 1e-12);
}

TEST(Mmd, FarClustersMatchHandComputation) {
  const Samples a = {{0.0}, {0.1}}, b = {{100.0}, {100.1}};
  // Within-set terms: k(0, 0.1) = exp(-0.005) on each side; cross terms vanish.
  const double expected = 2 * std::exp(-0.005);
  EXPECT_NEAR(mmd_fidelity(a, b, 1.0), expected, 1e-12);
  EXPECT_GT(mmd_fidelity(a, b, 1.0), 0.5);
}

TEST(Mmd, TooFewSamplesIsArgumentError) {
  EXPECT_THROW(mmd_fidelity(Samples{{1.0}}, Samples{{1.0}, {2.0}}), ArgumentError);
}

TEST(Mmd, MedianHeuristicOnHandSet) {
  // Pairwise distances 1, 2, 3 over the pooled points 0, 1, 3 -> median 2.
  EXPECT_EQ(median_heuristic_bandwidth(Samples{{0.0}, {1.0}}, Samples{{3.0}}), 2.0);
}

TEST(Roc, ReportCarriesCountsAndOrientation) {
  AttackScoreTable t;
  t.rows = {{0, true, 1.0}, {1, true, 3.0}, {2, false, 2.0}, {3, false, 4.0}};
  const auto r = roc_report(t);
  EXPECT_EQ(r.auc, 0.75);
  EXPECT_EQ(r.n_members, 2u);
  EXPECT_EQ(r.n_nonmembers, 2u);
  EXPECT_EQ(r.member_mean, 2.0);
  EXPECT_EQ(r.nonmember_mean, 3.0);
  EXPECT_EQ(r.orientation, "lower score => member");
  for (const auto& [level, tpr] : r.tpr_at_fpr) {
    EXPECT_GE(tpr, 0.0);
    EXPECT_LE(tpr, 1.0);
  }
}

TEST(Sweep, GridShapes) {
  const auto g = default_t_grid();
  ASSERT_EQ(g.size(), 21u);
  EXPECT_EQ(g.front(), 1e-5);
  EXPECT_EQ(g.back(), 1 - 1e-5);
  EXPECT_NEAR(g[10], 0.5, 1e-15);
  EXPECT_EQ(default_t_grid(1), (std::vector<double>{0.5}));
}

TEST(Sweep, SinglePointGridGivesOneRow) {
  GeneratorConfig gc;
  gc.n_per_split = 32;
  gc.patch = 4;
  const auto ds = generate(gc);
  const std::vector<double> grid = {0.5};
  const auto table = sweep_auc_over_t(testing::zero_field(ds.dim()), ds, AttackConfig{}, grid);
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].t, 0.5);
  EXPECT_THROW(sweep_auc_over_t(testing::zero_field(ds.dim()), ds, AttackConfig{}, std::vector<double>{}),
               ArgumentError);
}

TEST(Sweep, UntrainedModelStaysNearChance) {
  GeneratorConfig gc;
  gc.seed = 2;
  const auto ds = generate(gc);
  MlpConfig mc;
  mc.data_dim = ds.dim();
  mc.seed = 3;
  const auto model = MlpVelocityModel::initialized(mc);
  AttackConfig ac;
  ac.statistic = Statistic::Mc;
  const auto table = sweep_auc_over_t(model, ds, ac, default_t_grid(5));
  // 64 vs 64 has AUC standard error near 0.05 under the null.
  for (const auto& r : table.rows) EXPECT_NEAR(r.auc, 0.5, 0.2) << "t=" << r.t;
}

TEST(Sweep, BestPrefersEarliestOnTies) {
  SweepTable t;
  t.rows = {{0.1, 0.6}, {0.2, 0.8}, {0.3, 0.8}};
  EXPECT_EQ(t.best().t, 0.2);
}

}  // namespace
}  // namespace rfmia
