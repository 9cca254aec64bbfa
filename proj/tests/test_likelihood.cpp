#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rfmia/errors.hpp"
#include "rfmia/likelihood.hpp"
#include "rfmia/metrics.hpp"
#include "rfmia/synth_data.hpp"
#include "test_support.hpp"

namespace rfmia {
namespace {

using testing::gaussian_marginal_field;
using testing::matrix_field;
using testing::zero_field;

LikelihoodConfig exact_config(std::size_t steps) {
  LikelihoodConfig c;
  c.n_steps = steps;
  c.mode = TraceMode::ExactSmallD;
  return c;
}

std::vector<double> random_matrix(std::size_t d, double scale, Rng& rng) {
  std::vector<double> a(d * d);
  for (double& v : a) v = scale * rng.normal();
  return a;
}

double trace_of(const std::vector<double>& a, std::size_t d) {
  double t = 0;
  for (std::size_t i = 0; i < d; ++i) t += a[i * d + i];
  return t;
}

// Standard deviation of a single Gaussian quadratic probe e^T A e.
double probe_std(const std::vector<double>& a, std::size_t d) {
  double s = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double sym = 0.5 * (a[i * d + j] + a[j * d + i]);
      s += sym * sym;
    }
  return std::sqrt(2 * s);
}

TEST(LogLikelihood, GaussianMarginalFieldRecoversStandardNormalDensity) {
  const auto field = gaussian_marginal_field(4);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const auto x = rng.normal_vector(4);
    const auto r = log_likelihood(field, x, exact_config(256));
    EXPECT_NEAR(r.logp, standard_normal_logpdf(x), 1e-3);
  }
}

TEST(LogLikelihood, ZeroFieldIsExact) {
  Rng rng(2);
  const auto x = rng.normal_vector(6);
  for (TraceMode mode : {TraceMode::ExactSmallD, TraceMode::HutchinsonAutodiff}) {
    LikelihoodConfig c;
    c.mode = mode;
    const auto r = log_likelihood(zero_field(6), x, c);
    EXPECT_EQ(r.x0, x);
    EXPECT_EQ(r.logp, standard_normal_logpdf(x));
  }
}

TEST(LogLikelihood, StandardNormalLogPdfHandValue) {
  const std::vector<double> x = {1.0, -2.0};
  EXPECT_NEAR(standard_normal_logpdf(x), -std::log(2 * std::numbers::pi) - 2.5, 1e-15);
}

TEST(LogLikelihood, HutchinsonAgreesWithExactTraceOnLinearStub) {
  const std::size_t d = 6;
  Rng rng(3);
  const auto a = random_matrix(d, 0.2, rng);
  const auto field = matrix_field(d, a);
  const auto x = rng.normal_vector(d);
  const auto exact = log_likelihood(field, x, exact_config(64));
  LikelihoodConfig hc;
  hc.n_steps = 64;
  hc.k = 64;
  hc.seed = 4;
  const auto hutch = log_likelihood(field, x, hc);
  // The Jacobian is constant, so the divergence integral is one K-probe
  // estimate of Tr(A).
  EXPECT_NEAR(exact.divergence_integral, trace_of(a, d), 1e-10);
  EXPECT_LT(std::abs(hutch.logp - exact.logp), 3 * probe_std(a, d) / std::sqrt(64.0));
}

TEST(LogLikelihood, Rk4ErrorShrinksAtFourthOrder) {
  const std::size_t d = 3;
  Rng rng(5);
  const auto a = random_matrix(d, 0.8, rng);
  const auto field = matrix_field(d, a);
  const auto x = rng.normal_vector(d);
  // Reference from a much finer grid; the trace part is exact for a linear field.
  const double ref = log_likelihood(field, x, exact_config(4096)).logp;
  const double e64 = std::abs(log_likelihood(field, x, exact_config(64)).logp - ref);
  const double e128 = std::abs(log_likelihood(field, x, exact_config(128)).logp - ref);
  const double ratio = e64 / e128;
  EXPECT_GE(ratio, 8.0) << e64 << " " << e128;
  EXPECT_LE(ratio, 32.0) << e64 << " " << e128;
  const double e256 = std::abs(log_likelihood(field, x, exact_config(256)).logp - ref);
  EXPECT_LT(std::abs(e128 - e256), 1e-4);
}

TEST(LogLikelihood, DeterministicGivenSeed) {
  MlpConfig mc;
  mc.data_dim = 4;
  mc.hidden = {8};
  mc.seed = 2;
  const auto model = MlpVelocityModel::initialized(mc);
  const std::vector<double> x = {0.1, -0.3, 1.2, 0.0};
  LikelihoodConfig c;
  c.n_steps = 16;
  c.seed = 9;
  EXPECT_EQ(log_likelihood(model, x, c).logp, log_likelihood(model, x, c).logp);
  LikelihoodConfig other = c;
  other.seed = 10;
  EXPECT_NE(log_likelihood(model, x, c).logp, log_likelihood(model, x, other).logp);
}

TEST(LogLikelihood, NonFiniteStateReportsTime) {
  testing::LambdaField blowup(2, [](const Tensor& x, std::span<const double>) { return ad::scale(x, 1e300); });
  try {
    log_likelihood(blowup, std::vector<double>{1.0, 2.0}, exact_config(16));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("t="), std::string::npos);
  }
}

TEST(LogLikelihood, InvalidConfigIsRejected) {
  LikelihoodConfig c;
  c.n_steps = 8;
  EXPECT_THROW(log_likelihood(zero_field(2), std::vector<double>{0, 0}, c), ConfigError);
  c.n_steps = 16;
  c.k = 0;
  EXPECT_THROW(log_likelihood(zero_field(2), std::vector<double>{0, 0}, c), ConfigError);
}

TEST(Hutchinson, LinearStubExpectationIsTrace) {
  const std::size_t d = 8;
  Rng rng(6);
  const auto a = random_matrix(d, 1.0, rng);
  const auto field = matrix_field(d, a);
  const auto x = rng.normal_vector(d);
  Rng probes(7);
  const std::size_t k = 10000;
  const double est = hutchinson_trace(field, x, 0.5, k, probes);
  EXPECT_LT(std::abs(est - trace_of(a, d)), 3 * probe_std(a, d) / std::sqrt(static_cast<double>(k)));
  EXPECT_NEAR(exact_trace(field, x, 0.5), trace_of(a, d), 1e-12);
}

TEST(Hutchinson, ConstantFieldHasZeroTrace) {
  testing::LambdaField constant(3, [](const Tensor& x, std::span<const double>) {
    return Tensor(Shape{x.dim(0), 3}, 1.5);
  });
  Rng rng(8);
  EXPECT_EQ(hutchinson_trace(constant, std::vector<double>{1, 2, 3}, 0.3, 4, rng), 0.0);
}

TEST(Hutchinson, TwoProbeEstimatesAreUnbiasedOnAnMlp) {
  MlpConfig mc;
  mc.data_dim = 5;
  mc.hidden = {16};
  mc.seed = 3;
  const auto model = MlpVelocityModel::initialized(mc);
  const std::vector<double> x = {0.3, -0.1, 0.8, 1.1, -0.6};
  const double t = 0.4;
  const double exact = exact_trace(model, x, t);
  Rng a(1), b(2);
  EXPECT_NE(hutchinson_trace(model, x, t, 2, a), hutchinson_trace(model, x, t, 2, b));
  std::vector<double> est;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    Rng r(derive_seed(s, "pair"));
    est.push_back(hutchinson_trace(model, x, t, 2, r));
  }
  double m = 0, v = 0;
  for (double e : est) m += e;
  m /= static_cast<double>(est.size());
  for (double e : est) v += (e - m) * (e - m);
  const double se = std::sqrt(v / static_cast<double>(est.size() - 1) / static_cast<double>(est.size()));
  EXPECT_LT(std::abs(m - exact), 3 * se);
}

TEST(Study, ZeroFieldGivesGaussianDensityPerNonmember) {
  GeneratorConfig gc;
  gc.n_per_split = 32;
  gc.patch = 4;
  auto ds = generate(gc);
  fill_complexity(ds);
  LikelihoodConfig c;
  c.n_steps = 16;
  const auto study = likelihood_complexity_study(zero_field(ds.dim()), ds, c);
  ASSERT_EQ(study.rows.size(), ds.nonmembers.size());
  std::vector<double> logp, bytes;
  for (std::size_t i = 0; i < ds.nonmembers.size(); ++i) {
    EXPECT_EQ(study.rows[i].id, ds.nonmembers[i].id);
    EXPECT_EQ(study.rows[i].logp, standard_normal_logpdf(ds.nonmembers[i].x));
    logp.push_back(standard_normal_logpdf(ds.nonmembers[i].x));
    bytes.push_back(ds.nonmembers[i].complexity);
  }
  EXPECT_EQ(study.pearson, pearson(logp, bytes));
  EXPECT_EQ(study.spearman, spearman(logp, bytes));
  EXPECT_EQ(study.to_csv().rfind("id,logp,complexity_bytes\n", 0), 0u);
}

TEST(Sampling, ZeroFieldReturnsTheNoise) {
  const auto samples = generate_samples(zero_field(3), 4, 8, 1);
  ASSERT_EQ(samples.size(), 4u);
  const auto again = generate_samples(zero_field(3), 4, 8, 1);
  EXPECT_EQ(samples, again);
  EXPECT_NE(samples[0], samples[1]);
}

}  // namespace
}  // namespace rfmia
