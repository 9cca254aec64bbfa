#include <gtest/gtest.h>

#include <cmath>

#include "rfmia/complexity.hpp"
#include "rfmia/errors.hpp"
#include "rfmia/flow.hpp"
#include "rfmia/mia.hpp"
#include "rfmia/synth_data.hpp"
#include "test_support.hpp"

namespace rfmia {
namespace {

using testing::LambdaField;
using testing::zero_field;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

LambdaField constant_field(std::vector<double> c) {
  const std::size_t d = c.size();
  return LambdaField(d, [c = std::move(c), d](const Tensor& x, std::span<const double>) {
    const std::size_t b = x.dim(0);
    std::vector<double> out(b * d);
    for (std::size_t r = 0; r < b; ++r) std::copy(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(r * d));
    return Tensor(Shape{b, d}, std::move(out));
  });
}

TEST(TNaive, PerfectReconstructionStubScoresZero) {
  Rng rng(1);
  const auto x = rng.normal_vector(6), eps = rng.normal_vector(6);
  const double t = 0.3;
  // Recovers eps from x_t = t x + (1-t) eps and returns x - eps.
  LambdaField stub(6, [&](const Tensor& xt, std::span<const double>) {
    std::vector<double> out(6);
    for (std::size_t j = 0; j < 6; ++j) out[j] = x[j] - (xt.at(j) - t * x[j]) / (1 - t);
    return Tensor(Shape{1, 6}, out);
  });
  EXPECT_NEAR(t_naive(stub, x, t, eps), 0.0, 1e-24);
}

TEST(TNaive, ZeroModelGivesDistanceToNoise) {
  Rng rng(2);
  const auto x = rng.normal_vector(6), eps = rng.normal_vector(6);
  EXPECT_DOUBLE_EQ(t_naive(zero_field(6), x, 0.5, eps), sq_dist(x, eps));
}

TEST(TNaive, DimensionMismatchIsRejected) {
  EXPECT_THROW(t_naive(zero_field(3), std::vector<double>{1, 2}, 0.5, std::vector<double>{1, 2}), DimensionError);
}

TEST(TMc, PerfectMemorizerScoresZeroForAnyN) {
  Rng rng(3);
  const auto x = rng.normal_vector(5);
  const auto stub = constant_field(x);
  for (std::size_t n : {1, 2, 5, 10}) {
    Rng r(n);
    EXPECT_NEAR(t_mc(stub, x, 0.5, n, r), 0.0, 1e-24);
  }
}

TEST(TMc, SingleDrawMatchesNaiveWithoutNoiseTerm) {
  MlpConfig cfg;
  cfg.data_dim = 4;
  cfg.hidden = {8};
  const auto model = MlpVelocityModel::initialized(cfg);
  Rng rng(4);
  const auto x = rng.normal_vector(4);
  const double t = 0.6;
  Rng shared(99);
  const auto eps = Rng(99).normal_vector(4);
  const double mc = t_mc(model, x, t, 1, shared);
  std::vector<double> xt(4);
  for (std::size_t j = 0; j < 4; ++j) xt[j] = t * x[j] + (1 - t) * eps[j];
  const auto v = model.velocity_at(xt, t);
  EXPECT_NEAR(mc, sq_dist(x, v), 1e-12);
  std::vector<double> v_plus(4);
  for (std::size_t j = 0; j < 4; ++j) v_plus[j] = v[j] + eps[j];
  EXPECT_NEAR(t_naive(model, x, t, eps), sq_dist(x, v_plus), 1e-12);
}

TEST(TMc, IdentityStubConvergesToScaledNorm) {
  LambdaField identity(16, [](const Tensor& xt, std::span<const double>) { return ad::scale(xt, 1.0); });
  Rng rng(5);
  const auto x = rng.normal_vector(16);
  double norm2 = 0;
  for (double v : x) norm2 += v * v;
  for (double t : {0.2, 0.5, 0.8}) {
    Rng r(6);
    const double expected = (1 - t) * (1 - t) * norm2;
    EXPECT_NEAR(t_mc(identity, x, t, 10000, r), expected, 0.02 * expected) << "t=" << t;
  }
}

TEST(TMc, ZeroDrawsRejected) {
  Rng rng(1);
  EXPECT_THROW(t_mc(zero_field(2), std::vector<double>{1, 2}, 0.5, 0, rng), ArgumentError);
}

PatchDataset tiny_dataset() {
  GeneratorConfig g;
  g.n_per_split = 32;
  g.patch = 4;
  g.seed = 11;
  auto ds = generate(g);
  fill_complexity(ds);
  return ds;
}

TEST(Calibration, ScoresScaleWithNumeratorAndInverselyWithComplexity) {
  auto ds = tiny_dataset();
  // Two members with the same x: equal T_mc under the zero field.
  ds.members[1].x = ds.members[0].x;
  ds.members[0].complexity = 100;
  ds.members[1].complexity = 200;
  // A third with doubled squared norm and the same complexity as the first.
  ds.members[2].x = ds.members[0].x;
  for (double& v : ds.members[2].x) v *= std::sqrt(2.0);
  ds.members[2].complexity = 100;
  AttackConfig ac;
  ac.statistic = Statistic::McCal;
  ac.n_mc = 3;
  const auto table = score_dataset(zero_field(ds.dim()), ds, ac);
  auto score_of = [&](std::uint64_t id) {
    for (const auto& r : table.rows)
      if (r.id == id) return r.score;
    return -1.0;
  };
  const double a = score_of(ds.members[0].id), b = score_of(ds.members[1].id), c = score_of(ds.members[2].id);
  EXPECT_NEAR(a / b, 2.0, 1e-12);
  EXPECT_NEAR(c / a, 2.0, 1e-12);
}

TEST(Calibration, NaiveCalibratedRatioEqualsRawRatioForEqualComplexity) {
  const auto ds = tiny_dataset();
  const ComplexityMeter meter(ds.standardization);
  Rng rng(7);
  // Find two members sharing a compressed size.
  for (std::size_t i = 0; i < ds.members.size(); ++i) {
    for (std::size_t j = i + 1; j < ds.members.size(); ++j) {
      if (meter(ds.members[i].x) != meter(ds.members[j].x)) continue;
      const auto eps = rng.normal_vector(ds.dim());
      const auto field = zero_field(ds.dim());
      const double raw = t_naive(field, ds.members[i].x, 0.5, eps) / t_naive(field, ds.members[j].x, 0.5, eps);
      const double cal = t_naive_cal(field, ds.members[i].x, 0.5, eps, meter) /
                         t_naive_cal(field, ds.members[j].x, 0.5, eps, meter);
      EXPECT_NEAR(raw, cal, 1e-12 * raw);
      return;
    }
  }
  FAIL() << "no two members share a compressed size";
}

TEST(Calibration, PerfectModelScoresZero) {
  const auto ds = tiny_dataset();
  const ComplexityMeter meter(ds.standardization);
  const auto& x = ds.members[0].x;
  const auto stub = constant_field(x);
  Rng rng(8);
  EXPECT_EQ(t_mc_cal(stub, x, 0.5, 5, rng, meter), 0.0);
  const auto eps = rng.normal_vector(ds.dim());
  LambdaField naive_stub(ds.dim(), [&](const Tensor&, std::span<const double>) {
    std::vector<double> out(ds.dim());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = x[j] - eps[j];
    return Tensor(Shape{1, ds.dim()}, out);
  });
  EXPECT_NEAR(t_naive_cal(naive_stub, x, 0.5, eps, meter), 0.0, 1e-24);
}

TEST(ScoreDataset, EmptyNonmembersIsConfigError) {
  auto ds = tiny_dataset();
  ds.nonmembers.clear();
  EXPECT_THROW(score_dataset(zero_field(ds.dim()), ds, AttackConfig{}), ConfigError);
}

TEST(ScoreDataset, TimeOutsideClampIsConfigError) {
  const auto ds = tiny_dataset();
  AttackConfig ac;
  ac.t = 1.0;
  EXPECT_THROW(score_dataset(zero_field(ds.dim()), ds, ac), ConfigError);
  ac.t = 0.0;
  EXPECT_THROW(score_dataset(zero_field(ds.dim()), ds, ac), ConfigError);
}

TEST(ScoreDataset, OneRowPerSampleInIdOrderAndDeterministic) {
  const auto ds = tiny_dataset();
  MlpConfig cfg;
  cfg.data_dim = ds.dim();
  cfg.hidden = {8};
  const auto model = MlpVelocityModel::initialized(cfg);
  for (Statistic s : {Statistic::Naive, Statistic::Mc, Statistic::NaiveCal, Statistic::McCal}) {
    AttackConfig ac;
    ac.statistic = s;
    ac.seed = 3;
    const auto a = score_dataset(model, ds, ac);
    ASSERT_EQ(a.rows.size(), ds.size());
    for (std::size_t i = 1; i < a.rows.size(); ++i) EXPECT_LT(a.rows[i - 1].id, a.rows[i].id);
    EXPECT_EQ(a.to_csv(), score_dataset(model, ds, ac).to_csv());
    for (const auto& r : a.rows) {
      EXPECT_GE(r.score, 0.0);
      EXPECT_TRUE(std::isfinite(r.score));
      EXPECT_GE(r.complexity_bytes, 1u);
    }
  }
}

TEST(ScoreDataset, ScoresMatchSingleSampleStatistics) {
  const auto ds = tiny_dataset();
  MlpConfig cfg;
  cfg.data_dim = ds.dim();
  cfg.hidden = {8};
  const auto model = MlpVelocityModel::initialized(cfg);
  AttackConfig ac;
  ac.statistic = Statistic::Mc;
  ac.n_mc = 4;
  ac.t = 0.35;
  ac.seed = 21;
  const auto table = score_dataset(model, ds, ac);
  for (const auto& s : ds.members) {
    Rng rng(attack_sample_seed(ac.seed, s.id));
    const double direct = t_mc(model, s.x, ac.t, ac.n_mc, rng);
    for (const auto& r : table.rows)
      if (r.id == s.id) EXPECT_NEAR(r.score, direct, 1e-12 * direct);
  }
}

TEST(ScoreDataset, CsvHasDeclaredColumns) {
  const auto ds = tiny_dataset();
  const auto csv = score_dataset(zero_field(ds.dim()), ds, AttackConfig{}).to_csv("# note");
  EXPECT_EQ(csv.rfind("# note\nid,is_member,score,complexity_bytes,t,statistic,n_mc,seed\n", 0), 0u);
}

TEST(Statistic, NamesRoundTrip) {
  for (Statistic s : {Statistic::Naive, Statistic::Mc, Statistic::NaiveCal, Statistic::McCal})
    EXPECT_EQ(parse_statistic(statistic_name(s)), s);
  EXPECT_THROW(parse_statistic("lira"), ConfigError);
}

TEST(Harness, OverfitModelScoresMembersLower) {
  const auto ds = tiny_dataset();
  MlpConfig mc;
  mc.data_dim = ds.dim();
  mc.hidden = {64, 64};
  mc.seed = 4;
  mc.output_gain = 0.0;
  mc.linear_skip = isotropic_skip(ds.dim());
  TrainConfig tc;
  tc.steps = 2000;
  tc.batch_size = 32;
  tc.log_interval = 2000;
  tc.checkpoint_interval = 2000;
  const auto run = train(ds, MlpVelocityModel::initialized(mc), tc);
  AttackConfig ac;
  ac.statistic = Statistic::Naive;
  const auto table = score_dataset(run.model, ds, ac);
  double m = 0, n = 0;
  for (double s : table.member_scores()) m += s;
  for (double s : table.nonmember_scores()) n += s;
  EXPECT_LT(m / ds.members.size(), n / ds.nonmembers.size());
}

}  // namespace
}  // namespace rfmia
