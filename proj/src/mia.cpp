#include "rfmia/mia.hpp"

#include <algorithm>
#include <sstream>

#include "rfmia/errors.hpp"
#include "rfmia/flow.hpp"
#include "rfmia/io.hpp"

namespace rfmia {

std::string statistic_name(Statistic s) {
  switch (s) {
    case Statistic::Naive: return "naive";
    case Statistic::Mc: return "mc";
    case Statistic::NaiveCal: return "naive_cal";
    case Statistic::McCal: return "mc_cal";
  }
  throw InternalError("unknown statistic");
}

Statistic parse_statistic(std::string_view name) {
  for (Statistic s : {Statistic::Naive, Statistic::Mc, Statistic::NaiveCal, Statistic::McCal}) {
    if (statistic_name(s) == name) return s;
  }
  throw ConfigError("unknown statistic '" + std::string(name) + "' (naive, mc, naive_cal, mc_cal)");
}

void AttackConfig::validate() const {
  if (!(t >= kTimeClampMin && t <= kTimeClampMax)) {
    throw ConfigError("attack: t=" + io::fmt_double(t) + " outside the clamp interval");
  }
  if (n_mc == 0) throw ConfigError("attack: n_mc must be >= 1");
}

namespace {

bool is_mc(Statistic s) { return s == Statistic::Mc || s == Statistic::McCal; }
bool is_calibrated(Statistic s) { return s == Statistic::NaiveCal || s == Statistic::McCal; }

// Fills rows [row0, row0 + eps.size()/d) of xt with t x + (1-t) eps.
void write_noisy_rows(std::span<double> xt, std::size_t row0, std::span<const double> x, double t,
                      std::span<const double> eps) {
  const std::size_t d = x.size();
  for (std::size_t k = 0; k < eps.size() / d; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      xt[(row0 + k) * d + j] = t * x[j] + (1.0 - t) * eps[k * d + j];
    }
  }
}

double reconstruction_error(std::span<const double> x, std::span<const double> estimate) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - estimate[j]) * (x[j] - estimate[j]);
  return s;
}

// Mean of v over n consecutive rows starting at row0.
std::vector<double> mean_rows(std::span<const double> v, std::size_t row0, std::size_t n, std::size_t d) {
  std::vector<double> m(d, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) m[j] += v[(row0 + k) * d + j];
  for (double& x : m) x /= static_cast<double>(n);
  return m;
}

std::vector<double> draw_noise(Rng& rng, std::size_t count) {
  std::vector<double> eps(count);
  rng.fill_normal(eps);
  return eps;
}

}  // namespace

double t_naive(const VelocityField& model, std::span<const double> x, double t,
               std::span<const double> eps) {
  if (x.size() != model.data_dim() || eps.size() != x.size()) {
    throw DimensionError("t_naive: dimension mismatch");
  }
  std::vector<double> xt(x.size());
  write_noisy_rows(xt, 0, x, t, eps);
  auto v = model.velocity_at(xt, t);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] += eps[j];
  return reconstruction_error(x, v);
}

double t_mc(const VelocityField& model, std::span<const double> x, double t, std::size_t n_mc, Rng& rng) {
  if (n_mc == 0) throw ArgumentError("t_mc: n_mc must be >= 1");
  const std::size_t d = model.data_dim();
  if (x.size() != d) throw DimensionError("t_mc: dimension mismatch");
  const auto eps = draw_noise(rng, n_mc * d);
  GradModeGuard no_grad(false);
  Tensor xt(Shape{n_mc, d});
  write_noisy_rows(xt.data(), 0, x, t, eps);
  const Tensor v = model.velocity(xt, t);
  return reconstruction_error(x, mean_rows(v.data(), 0, n_mc, d));
}

double t_mc_cal(const VelocityField& model, std::span<const double> x, double t, std::size_t n_mc,
                Rng& rng, const ComplexityMeter& complexity) {
  return t_mc(model, x, t, n_mc, rng) / static_cast<double>(complexity(x));
}

double t_naive_cal(const VelocityField& model, std::span<const double> x, double t,
                   std::span<const double> eps, const ComplexityMeter& complexity) {
  return t_naive(model, x, t, eps) / static_cast<double>(complexity(x));
}

std::vector<double> AttackScoreTable::member_scores() const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.is_member) out.push_back(r.score);
  return out;
}

std::vector<double> AttackScoreTable::nonmember_scores() const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (!r.is_member) out.push_back(r.score);
  return out;
}

std::string AttackScoreTable::to_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "id,is_member,score,complexity_bytes,t,statistic,n_mc,seed\n";
  for (const auto& r : rows) {
    os << r.id << ',' << (r.is_member ? 1 : 0) << ',' << io::fmt_double(r.score) << ','
       << r.complexity_bytes << ',' << io::fmt_double(r.t) << ',' << statistic_name(r.statistic) << ','
       << r.n_mc << ',' << r.seed << '\n';
  }
  return os.str();
}

std::uint64_t attack_sample_seed(std::uint64_t attack_seed, std::uint64_t sample_id) {
  return derive_seed(derive_seed(attack_seed, "attack"), sample_id);
}

AttackScoreTable score_dataset(const VelocityField& model, const PatchDataset& ds, const AttackConfig& cfg) {
  cfg.validate();
  if (ds.members.empty() || ds.nonmembers.empty()) {
    throw ConfigError("attack: both members and nonmembers are required");
  }
  const std::size_t d = ds.dim();
  if (model.data_dim() != d) throw DimensionError("attack: model and dataset dimensions differ");

  std::vector<std::pair<const Sample*, bool>> samples;
  for (const Sample& s : ds.members) samples.emplace_back(&s, true);
  for (const Sample& s : ds.nonmembers) samples.emplace_back(&s, false);
  std::sort(samples.begin(), samples.end(),
            [](const auto& a, const auto& b) { return a.first->id < b.first->id; });

  const bool mc = is_mc(cfg.statistic);
  const std::size_t draws = mc ? cfg.n_mc : 1;
  const ComplexityMeter meter(ds.standardization);

  // All noisy inputs go through the network in one batch.
  GradModeGuard no_grad(false);
  Tensor xt(Shape{samples.size() * draws, d});
  std::vector<std::vector<double>> noise(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i].first;
    if (s.x.size() != d) throw DimensionError("attack: sample dimension mismatch");
    Rng rng(attack_sample_seed(cfg.seed, s.id));
    noise[i] = draw_noise(rng, draws * d);
    write_noisy_rows(xt.data(), i * draws, s.x, cfg.t, noise[i]);
  }
  const Tensor v = model.velocity(xt, cfg.t);

  AttackScoreTable table;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i].first;
    double score;
    if (mc) {
      score = reconstruction_error(s.x, mean_rows(v.data(), i * draws, draws, d));
    } else {
      auto est = mean_rows(v.data(), i, 1, d);
      for (std::size_t j = 0; j < d; ++j) est[j] += noise[i][j];
      score = reconstruction_error(s.x, est);
    }
    const std::uint32_t c = s.complexity > 0 ? s.complexity : meter(s.x);
    if (is_calibrated(cfg.statistic)) score /= static_cast<double>(c);
    table.rows.push_back({s.id, samples[i].second, score, c, cfg.t, cfg.statistic, draws,
                          attack_sample_seed(cfg.seed, s.id)});
  }
  return table;
}

}  // namespace rfmia
