#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfmia/mlp.hpp"
#include "rfmia/rng.hpp"
#include "rfmia/synth_data.hpp"

namespace rfmia {

inline constexpr double kDefaultRidge = 1e-8;

struct DataMoments {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  double ridge = kDefaultRidge;

  std::size_t dim() const { return static_cast<std::size_t>(mu.size()); }
};

/// Sample mean and 1/(n-1) covariance. Throws ArgumentError for n < 2.
DataMoments estimate_moments(std::span<const Sample> members, double ridge = kDefaultRidge);
DataMoments estimate_moments(const std::vector<std::vector<double>>& rows, double ridge = kDefaultRidge);

/// The affine LMMSE map at time t: v_linear(x_t) = W x_t + b.
struct AffineMap {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

/// W = (t S - (1-t) I)(t^2 S + (1-t)^2 I + ridge I)^{-1}, b = mu - W t mu.
/// Throws NumericError when the system cannot be solved.
AffineMap lmmse_map(const DataMoments& m, double t);

std::vector<double> v_linear(const DataMoments& m, std::span<const double> x_t, double t);

/// The LMMSE baseline as a velocity field. Differentiable in x when all
/// rows of a batch share one t.
class LinearVelocityField final : public VelocityField {
 public:
  explicit LinearVelocityField(DataMoments moments) : m_(std::move(moments)) {}
  std::size_t data_dim() const override { return m_.dim(); }
  using VelocityField::velocity;
  Tensor velocity(const Tensor& x, std::span<const double> t) const override;

 private:
  DataMoments m_;
};

/// Eigendecomposition of the moments in the form used by MlpVelocityModel.
LinearSkip linear_skip_from(const DataMoments& m);

/// (2t - 1) I, the cross-covariance of v and x_t for standardized data.
Eigen::MatrixXd cross_covariance_schedule(double t, std::size_t dim);

/// Mean over n draws of ||v_theta(x_t, t) - v_linear(x_t, t)||^2 with
/// x_t = t x + (1 - t) eps.
double linearity_gap(const VelocityField& model, const DataMoments& m, std::span<const double> x, double t,
                     Rng& rng, std::size_t n);

struct GapRow {
  double t = 0.0;
  double member_mean = 0.0;
  double member_std = 0.0;
  double nonmember_mean = 0.0;
  double nonmember_std = 0.0;

  /// (member_mean - nonmember_mean) / pooled std.
  double separation() const;
};

struct GapProfile {
  std::vector<GapRow> rows;

  const GapRow& max_separation() const;
  std::string to_csv(std::string_view header_comment = {}) const;
};

inline constexpr std::size_t kDefaultGapDraws = 8;

GapProfile gap_profile(const VelocityField& model, const DataMoments& m, const PatchDataset& ds,
                       std::span<const double> t_grid, std::uint64_t seed, std::size_t n = kDefaultGapDraws);

}  // namespace rfmia
