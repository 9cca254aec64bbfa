#include "rfmia/likelihood.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "rfmia/complexity.hpp"
#include "rfmia/errors.hpp"
#include "rfmia/io.hpp"
#include "rfmia/metrics.hpp"

namespace rfmia {

void LikelihoodConfig::validate() const {
  if (n_steps < 16) throw ConfigError("likelihood: n_steps must be >= 16");
  if (k < 1) throw ConfigError("likelihood: need at least one probe");
}

double standard_normal_logpdf(std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return -0.5 * sq - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
}

std::pair<std::vector<double>, double> velocity_and_trace(const VelocityField& model,
                                                          std::span<const double> x, double t,
                                                          std::span<const double> probes, std::size_t k) {
  const std::size_t d = x.size();
  if (d != model.data_dim() || probes.size() != k * d) throw DimensionError("trace: dimension mismatch");
  GradModeGuard with_grad(true);
  Tensor xs(Shape{k, d});
  for (std::size_t r = 0; r < k; ++r) std::copy(x.begin(), x.end(), xs.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  xs.set_requires_grad();
  const Tensor e(Shape{k, d}, std::vector<double>(probes.begin(), probes.end()));
  const Tensor v = model.velocity(xs, t);
  std::vector<double> v0(v.data().begin(), v.data().begin() + static_cast<std::ptrdiff_t>(d));
  if (!v.taped()) return {v0, 0.0};  // field does not depend on x
  const Tensor out = ad::sum(ad::mul(v, e));
  const auto g = gradients(out, std::span<const Tensor>(&xs, 1)).front();
  double acc = 0.0;
  for (std::size_t i = 0; i < k * d; ++i) acc += g[i] * probes[i];
  return {v0, acc / static_cast<double>(k)};
}

double hutchinson_trace(const VelocityField& model, std::span<const double> x, double t, std::size_t k,
                        Rng& rng) {
  if (k == 0) throw ArgumentError("hutchinson_trace: need at least one probe");
  std::vector<double> probes(k * x.size());
  rng.fill_normal(probes);
  return velocity_and_trace(model, x, t, probes, k).second;
}

namespace {

std::vector<double> identity_probes(std::size_t d) {
  std::vector<double> probes(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) probes[i * d + i] = 1.0;
  return probes;
}

}  // namespace

double exact_trace(const VelocityField& model, std::span<const double> x, double t) {
  const std::size_t d = x.size();
  return velocity_and_trace(model, x, t, identity_probes(d), d).second * static_cast<double>(d);
}

LikelihoodResult log_likelihood(const VelocityField& model, std::span<const double> x1,
                                const LikelihoodConfig& cfg) {
  cfg.validate();
  const std::size_t d = x1.size();
  if (d != model.data_dim()) throw DimensionError("log_likelihood: dimension mismatch");

  std::vector<double> probes;
  std::size_t k;
  double trace_scale;
  if (cfg.mode == TraceMode::ExactSmallD) {
    probes = identity_probes(d);
    k = d;
    trace_scale = static_cast<double>(d);
  } else {
    Rng rng(derive_seed(cfg.seed, "probes"));
    probes.resize(cfg.k * d);
    rng.fill_normal(probes);
    k = cfg.k;
    trace_scale = 1.0;
  }

  auto field = [&](const std::vector<double>& x, double t) {
    for (double v : x) {
      if (!std::isfinite(v)) throw NumericError("log_likelihood: non-finite state at t=" + io::fmt_double(t));
    }
    auto [v, tr] = velocity_and_trace(model, x, t, probes, k);
    return std::pair{std::move(v), tr * trace_scale};
  };
  auto axpy = [](const std::vector<double>& x, double a, const std::vector<double>& y) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * y[i];
    return out;
  };

  std::vector<double> x(x1.begin(), x1.end());
  double div = 0.0;  // int_t^1 Tr dt accumulated while stepping down
  const double h = 1.0 / static_cast<double>(cfg.n_steps);
  for (std::size_t s = cfg.n_steps; s > 0; --s) {
    const double t = static_cast<double>(s) * h;
    const auto [k1, d1] = field(x, t);
    const auto [k2, d2] = field(axpy(x, -0.5 * h, k1), t - 0.5 * h);
    const auto [k3, d3] = field(axpy(x, -0.5 * h, k2), t - 0.5 * h);
    const auto [k4, d4] = field(axpy(x, -h, k3), t - h);
    for (std::size_t i = 0; i < d; ++i) x[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    div += h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("log_likelihood: non-finite state at t=0");
  }
  return {standard_normal_logpdf(x) - div, x, div};
}

std::string LikelihoodStudy::to_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "id,logp,complexity_bytes\n";
  for (const auto& r : rows) os << r.id << ',' << io::fmt_double(r.logp) << ',' << r.complexity_bytes << '\n';
  return os.str();
}

LikelihoodStudy likelihood_complexity_study(const VelocityField& model, const PatchDataset& ds,
                                            const LikelihoodConfig& cfg) {
  const ComplexityMeter meter(ds.standardization);
  LikelihoodStudy study;
  std::vector<double> logps, sizes;
  for (const Sample& s : ds.nonmembers) {
    LikelihoodConfig c = cfg;
    c.seed = derive_seed(cfg.seed, s.id);
    const double logp = log_likelihood(model, s.x, c).logp;
    const std::uint32_t bytes = s.complexity > 0 ? s.complexity : meter(s.x);
    study.rows.push_back({s.id, logp, bytes});
    logps.push_back(logp);
    sizes.push_back(bytes);
  }
  if (study.rows.size() >= 2) {
    study.pearson = pearson(logps, sizes);
    study.spearman = spearman(logps, sizes);
  }
  return study;
}

std::vector<std::vector<double>> generate_samples(const VelocityField& model, std::size_t n,
                                                  std::size_t n_steps, std::uint64_t seed) {
  if (n == 0 || n_steps == 0) throw ArgumentError("generate_samples: need n > 0 and n_steps > 0");
  const std::size_t d = model.data_dim();
  GradModeGuard no_grad(false);
  Rng rng(derive_seed(seed, "generate"));
  Tensor x(Shape{n, d});
  rng.fill_normal(x.data());
  const double h = 1.0 / static_cast<double>(n_steps);
  auto shifted = [&](const Tensor& base, double a, const Tensor& dir) {
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < n * d; ++i) out.data()[i] = base.data()[i] + a * dir.data()[i];
    return out;
  };
  for (std::size_t s = 0; s < n_steps; ++s) {
    const double t = static_cast<double>(s) * h;
    const Tensor k1 = model.velocity(x, t);
    const Tensor k2 = model.velocity(shifted(x, 0.5 * h, k1), t + 0.5 * h);
    const Tensor k3 = model.velocity(shifted(x, 0.5 * h, k2), t + 0.5 * h);
    const Tensor k4 = model.velocity(shifted(x, h, k3), t + h);
    for (std::size_t i = 0; i < n * d; ++i) {
      x.data()[i] += h / 6.0 * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i]);
    }
  }
  std::vector<std::vector<double>> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    out[r].assign(x.data().begin() + static_cast<std::ptrdiff_t>(r * d),
                  x.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    for (double v : out[r]) {
      if (!std::isfinite(v)) throw NumericError("generate_samples: non-finite sample");
    }
  }
  return out;
}

}  // namespace rfmia
