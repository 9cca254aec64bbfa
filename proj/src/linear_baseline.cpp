#include "rfmia/linear_baseline.hpp"

#include <cmath>
#include <sstream>

#include "rfmia/errors.hpp"
#include "rfmia/io.hpp"

namespace rfmia {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

DataMoments moments_of(const Eigen::MatrixXd& x, double ridge) {
  const auto n = x.rows();
  if (n < 2) throw ArgumentError("estimate_moments: need at least two samples");
  if (!(ridge > 0.0)) throw ArgumentError("estimate_moments: ridge must be positive");
  DataMoments m;
  m.mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mu.transpose();
  m.sigma = centered.transpose() * centered / static_cast<double>(n - 1);
  m.sigma = 0.5 * (m.sigma + m.sigma.transpose());
  m.ridge = ridge;
  return m;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

}  // namespace

DataMoments estimate_moments(std::span<const Sample> members, double ridge) {
  if (members.size() < 2) throw ArgumentError("estimate_moments: need at least two samples");
  const std::size_t d = members.front().x.size();
  Eigen::MatrixXd x(members.size(), d);
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].x.size() != d) throw DimensionError("estimate_moments: ragged samples");
    for (std::size_t j = 0; j < d; ++j) x(i, j) = members[i].x[j];
  }
  return moments_of(x, ridge);
}

DataMoments estimate_moments(const std::vector<std::vector<double>>& rows, double ridge) {
  if (rows.size() < 2) throw ArgumentError("estimate_moments: need at least two samples");
  const std::size_t d = rows.front().size();
  Eigen::MatrixXd x(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw DimensionError("estimate_moments: ragged samples");
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rows[i][j];
  }
  return moments_of(x, ridge);
}

AffineMap lmmse_map(const DataMoments& m, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("v_linear: t outside [0, 1]");
  const auto d = m.mu.size();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd a = t * t * m.sigma + ((1.0 - t) * (1.0 - t) + m.ridge) * eye;
  const Eigen::MatrixXd c = t * m.sigma - (1.0 - t) * eye;
  // A and C are both polynomials in Sigma, so W = C A^{-1} = (A^{-1} C^T)^T.
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericError("v_linear: system not positive definite at t=" + io::fmt_double(t));
  }
  AffineMap map;
  map.w = ldlt.solve(c.transpose()).transpose();
  map.b = m.mu - t * (map.w * m.mu);
  if (!map.w.allFinite() || !map.b.allFinite()) {
    throw NumericError("v_linear: non-finite solution at t=" + io::fmt_double(t));
  }
  return map;
}

std::vector<double> v_linear(const DataMoments& m, std::span<const double> x_t, double t) {
  if (x_t.size() != m.dim()) throw DimensionError("v_linear: dimension mismatch");
  const auto map = lmmse_map(m, t);
  const Eigen::Map<const Eigen::VectorXd> x(x_t.data(), static_cast<Eigen::Index>(x_t.size()));
  const Eigen::VectorXd v = map.w * x + map.b;
  return {v.data(), v.data() + v.size()};
}

Tensor LinearVelocityField::velocity(const Tensor& x, std::span<const double> t) const {
  const std::size_t d = data_dim();
  if (x.rank() != 2 || x.dim(1) != d) throw DimensionError("linear field: expected [B, D]");
  const std::size_t b = x.dim(0);
  if (t.size() != b) throw DimensionError("linear field: need one t per row");
  const bool shared_t = std::all_of(t.begin(), t.end(), [&](double s) { return s == t[0]; });
  if (b > 0 && shared_t) {
    const auto map = lmmse_map(m_, t[0]);
    RowMatrix w = map.w;
    Tensor wt(Shape{d, d}, std::vector<double>(w.data(), w.data() + w.size()));
    Tensor bt(Shape{d}, std::vector<double>(map.b.data(), map.b.data() + map.b.size()));
    return ad::linear(x, wt, bt);
  }
  Tensor out(Shape{b, d});
  for (std::size_t r = 0; r < b; ++r) {
    const auto v = v_linear(m_, x.data().subspan(r * d, d), t[r]);
    std::copy(v.begin(), v.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return out;
}

LinearSkip linear_skip_from(const DataMoments& m) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.sigma);
  if (eig.info() != Eigen::Success) throw NumericError("linear skip: eigendecomposition failed");
  LinearSkip skip;
  skip.ridge = m.ridge;
  skip.mean.assign(m.mu.data(), m.mu.data() + m.mu.size());
  skip.eigenvalues.assign(eig.eigenvalues().data(), eig.eigenvalues().data() + m.mu.size());
  const RowMatrix u = eig.eigenvectors();
  skip.eigenvectors.assign(u.data(), u.data() + u.size());
  return skip;
}

Eigen::MatrixXd cross_covariance_schedule(double t, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return (2.0 * t - 1.0) * Eigen::MatrixXd::Identity(d, d);
}

double linearity_gap(const VelocityField& model, const DataMoments& m, std::span<const double> x, double t,
                     Rng& rng, std::size_t n) {
  const std::size_t d = m.dim();
  if (n == 0) throw ArgumentError("linearity_gap: need at least one draw");
  if (x.size() != d || model.data_dim() != d) throw DimensionError("linearity_gap: dimension mismatch");
  GradModeGuard no_grad(false);
  Tensor xt(Shape{n, d});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) xt.data()[k * d + j] = t * x[j] + (1.0 - t) * rng.normal();
  const Tensor v = model.velocity(xt, t);
  const auto map = lmmse_map(m, t);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Map<const Eigen::VectorXd> row(xt.data().data() + k * d, static_cast<Eigen::Index>(d));
    const Eigen::VectorXd lin = map.w * row + map.b;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = v.data()[k * d + j] - lin(static_cast<Eigen::Index>(j));
      total += diff * diff;
    }
  }
  return total / static_cast<double>(n);
}

double GapRow::separation() const {
  const double pooled = std::sqrt((member_std * member_std + nonmember_std * nonmember_std) / 2.0);
  const double diff = member_mean - nonmember_mean;
  return pooled > 0.0 ? diff / pooled : 0.0;
}

const GapRow& GapProfile::max_separation() const {
  if (rows.empty()) throw StateError("gap profile: empty");
  const GapRow* best = &rows.front();
  for (const auto& r : rows)
    if (r.separation() > best->separation()) best = &r;
  return *best;
}

std::string GapProfile::to_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "t,member_mean,member_std,nonmember_mean,nonmember_std\n";
  for (const auto& r : rows) {
    os << io::fmt_double(r.t) << ',' << io::fmt_double(r.member_mean) << ',' << io::fmt_double(r.member_std)
       << ',' << io::fmt_double(r.nonmember_mean) << ',' << io::fmt_double(r.nonmember_std) << '\n';
  }
  return os.str();
}

GapProfile gap_profile(const VelocityField& model, const DataMoments& m, const PatchDataset& ds,
                       std::span<const double> t_grid, std::uint64_t seed, std::size_t n) {
  if (t_grid.empty()) throw ArgumentError("gap_profile: empty t grid");
  const std::uint64_t root = derive_seed(seed, "gap");
  GapProfile profile;
  for (double t : t_grid) {
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("gap_profile: t outside [0, 1]");
    auto gaps = [&](const std::vector<Sample>& split) {
      std::vector<double> out;
      for (const Sample& s : split) {
        Rng rng(derive_seed(root, s.id));
        out.push_back(linearity_gap(model, m, s.x, t, rng, n));
      }
      return out;
    };
    const auto [mm, ms] = mean_std(gaps(ds.members));
    const auto [nm, ns] = mean_std(gaps(ds.nonmembers));
    profile.rows.push_back({t, mm, ms, nm, ns});
  }
  return profile;
}

}  // namespace rfmia
