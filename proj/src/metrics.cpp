#include "rfmia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rfmia/errors.hpp"
#include "rfmia/flow.hpp"
#include "rfmia/io.hpp"

namespace rfmia {

namespace {

void require_both(std::span<const double> m, std::span<const double> n) {
  if (m.empty() || n.empty()) throw ArgumentError("metrics: need members and nonmembers");
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("mmd: sample dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double auc(std::span<const double> members, std::span<const double> nonmembers) {
  require_both(members, nonmembers);
  std::vector<double> pooled(members.begin(), members.end());
  pooled.insert(pooled.end(), nonmembers.begin(), nonmembers.end());
  const auto ranks = average_ranks(pooled);
  const double n_m = static_cast<double>(members.size());
  const double n_n = static_cast<double>(nonmembers.size());
  double rank_sum = 0.0;
  for (std::size_t i = members.size(); i < pooled.size(); ++i) rank_sum += ranks[i];
  return (rank_sum - n_n * (n_n + 1.0) / 2.0) / (n_m * n_n);
}

double auc(const AttackScoreTable& table) { return auc(table.member_scores(), table.nonmember_scores()); }

double tpr_at_fpr(std::span<const double> members, std::span<const double> nonmembers, double level) {
  require_both(members, nonmembers);
  if (!(level > 0.0 && level < 1.0)) throw ArgumentError("tpr_at_fpr: level must lie in (0, 1)");
  const auto allowed = static_cast<std::size_t>(std::floor(level * static_cast<double>(nonmembers.size()) + 1e-9));
  if (allowed >= nonmembers.size()) return 1.0;
  std::vector<double> sorted(nonmembers.begin(), nonmembers.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(allowed), sorted.end());
  const double cut = sorted[allowed];
  const auto hits = std::count_if(members.begin(), members.end(), [&](double s) { return s < cut; });
  return static_cast<double>(hits) / static_cast<double>(members.size());
}

double tpr_at_fpr(const AttackScoreTable& table, double level) {
  return tpr_at_fpr(table.member_scores(), table.nonmember_scores(), level);
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.empty()) throw ArgumentError("pearson: need equal nonzero lengths");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw NumericError("correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.empty()) throw ArgumentError("spearman: need equal nonzero lengths");
  return pearson(average_ranks(xs), average_ranks(ys));
}

double median_heuristic_bandwidth(const std::vector<std::vector<double>>& a,
                                  const std::vector<std::vector<double>>& b) {
  std::vector<const std::vector<double>*> pool;
  for (const auto& x : a) pool.push_back(&x);
  for (const auto& x : b) pool.push_back(&x);
  std::vector<double> dists;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j) dists.push_back(std::sqrt(sq_dist(*pool[i], *pool[j])));
  if (dists.empty()) throw ArgumentError("median heuristic: need at least two samples");
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double h = *mid;
  if (dists.size() % 2 == 0) h = (h + *std::max_element(dists.begin(), mid)) / 2.0;
  if (!(h > 0.0)) h = 1.0;
  return h;
}

double mmd_fidelity(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y,
                    double bandwidth) {
  if (x.size() < 2 || y.size() < 2) throw ArgumentError("mmd: each set needs at least two samples");
  const double h = bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(x, y);
  const double inv = 1.0 / (2.0 * h * h);
  auto k = [&](const std::vector<double>& a, const std::vector<double>& b) {
    return std::exp(-sq_dist(a, b) * inv);
  };
  auto within = [&](const std::vector<std::vector<double>>& s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) acc += 2.0 * k(s[i], s[j]);
    const double n = static_cast<double>(s.size());
    return acc / (n * (n - 1.0));
  };
  double cross = 0.0;
  for (const auto& a : x)
    for (const auto& b : y) cross += k(a, b);
  cross /= static_cast<double>(x.size() * y.size());
  return within(x) + within(y) - 2.0 * cross;
}

RocReport roc_report(const AttackScoreTable& table, std::span<const double> fpr_levels) {
  const auto m = table.member_scores();
  const auto n = table.nonmember_scores();
  RocReport r;
  r.auc = auc(m, n);
  static const double kDefaultLevels[] = {0.01, 0.05, 0.1};
  if (fpr_levels.empty()) fpr_levels = kDefaultLevels;
  for (double level : fpr_levels) r.tpr_at_fpr[level] = tpr_at_fpr(m, n, level);
  r.n_members = m.size();
  r.n_nonmembers = n.size();
  r.member_mean = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
  r.nonmember_mean = std::accumulate(n.begin(), n.end(), 0.0) / static_cast<double>(n.size());
  return r;
}

std::vector<double> default_t_grid(std::size_t points) {
  if (points == 0) throw ArgumentError("t grid: need at least one point");
  if (points == 1) return {0.5};
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid[i] = std::clamp(t, kTimeClampMin, kTimeClampMax);
  }
  return grid;
}

const SweepRow& SweepTable::best() const {
  if (rows.empty()) throw StateError("sweep: empty table");
  const SweepRow* best = &rows.front();
  for (const auto& r : rows)
    if (r.auc > best->auc) best = &r;
  return *best;
}

std::string SweepTable::to_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "t,auc,tpr_at_1pct,statistic,n_mc\n";
  for (const auto& r : rows) {
    os << io::fmt_double(r.t) << ',' << io::fmt_double(r.auc) << ',' << io::fmt_double(r.tpr_at_1pct) << ','
       << statistic_name(r.statistic) << ',' << r.n_mc << '\n';
  }
  return os.str();
}

SweepTable sweep_auc_over_t(const VelocityField& model, const PatchDataset& ds, const AttackConfig& cfg,
                            std::span<const double> t_grid) {
  if (t_grid.empty()) throw ArgumentError("sweep: empty t grid");
  SweepTable out;
  for (double t : t_grid) {
    AttackConfig c = cfg;
    c.t = t;
    const auto table = score_dataset(model, ds, c);
    const bool mc = cfg.statistic == Statistic::Mc || cfg.statistic == Statistic::McCal;
    out.rows.push_back({t, auc(table), tpr_at_fpr(table, 0.01), cfg.statistic, mc ? cfg.n_mc : 1});
  }
  return out;
}

}  // namespace rfmia
