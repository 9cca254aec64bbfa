#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfmia/tensor.hpp"

namespace rfmia {

/// A time-dependent vector field v(x, t) over R^D.
///
/// `x` is a batch [B, D]; `t` holds one time per row. Implementations built
/// from ad:: ops are differentiable w.r.t. `x`, which is what the likelihood
/// module relies on for trace estimates.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual std::size_t data_dim() const = 0;
  virtual Tensor velocity(const Tensor& x, std::span<const double> t) const = 0;

  Tensor velocity(const Tensor& x, double t) const;
  /// Single-sample convenience; returns shape [D].
  std::vector<double> velocity_at(std::span<const double> x, double t) const;
};

/// Fixed affine velocity mu + U diag(g(lambda, t)) U^T (x - t mu) with
/// g = (t lambda - (1 - t)) / (t^2 lambda + (1 - t)^2 + ridge), i.e. the
/// LMMSE velocity of data with mean mu and covariance U diag(lambda) U^T.
struct LinearSkip {
  std::vector<double> mean;
  std::vector<double> eigenvalues;
  std::vector<double> eigenvectors;  // row-major D x D, column k pairs with eigenvalues[k]
  double ridge = 1e-8;

  std::size_t dim() const { return mean.size(); }
  void validate() const;
  /// Differentiable in x; x is [B, D] with one t per row.
  Tensor apply(const Tensor& x, std::span<const double> t) const;
};

/// Skip for unit-covariance, zero-mean data: ((2t-1)/(t^2+(1-t)^2)) x.
LinearSkip isotropic_skip(std::size_t dim);

inline constexpr std::size_t kTimeEmbeddingWidth = 16;

/// Sinusoidal features of t: sin/cos pairs at geometrically spaced
/// frequencies from 1 to 64 rad per unit time.
std::vector<double> time_embedding(double t, std::size_t width = kTimeEmbeddingWidth);

struct MlpConfig {
  std::size_t data_dim = 64;
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::uint64_t seed = 0;
  /// Multiplier on the fan-in-scaled init of the output layer (0 gives a
  /// zero-velocity network at initialization).
  double output_gain = 1.0;
  /// When set, the layers model a residual on top of this linear field.
  std::optional<LinearSkip> linear_skip;
};

/// v_theta(x_t, t): GELU MLP over [x_t, embed(t)] with a linear output layer.
class MlpVelocityModel final : public VelocityField {
 public:
  /// Layer widths, first = D + embedding width, last = D.
  MlpVelocityModel(std::vector<std::size_t> widths, std::size_t embed_width = kTimeEmbeddingWidth);

  static MlpVelocityModel initialized(const MlpConfig& cfg);

  std::size_t data_dim() const override { return widths_.back(); }
  std::size_t embed_width() const { return embed_width_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t num_layers() const { return weights_.size(); }

  using VelocityField::velocity;
  Tensor velocity(const Tensor& x, std::span<const double> t) const override;

  Tensor& weight(std::size_t layer) { return weights_.at(layer); }
  Tensor& bias(std::size_t layer) { return biases_.at(layer); }
  const Tensor& weight(std::size_t layer) const { return weights_.at(layer); }
  const Tensor& bias(std::size_t layer) const { return biases_.at(layer); }

  /// Weights and biases interleaved per layer: W0, b0, W1, b1, ...
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  /// Independent copy of all parameters.
  MlpVelocityModel clone() const;

  // Provenance carried into checkpoints.
  std::uint64_t seed = 0;
  std::uint64_t train_step = 0;
  std::string sampler_descriptor = "none";
  std::optional<LinearSkip> linear_skip;

 private:
  std::vector<std::size_t> widths_;
  std::size_t embed_width_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Convenience wrapper for a single sample: returns v_theta(x_t, t) as [D].
Tensor forward(const VelocityField& model, const Tensor& x_t, double t);

}  // namespace rfmia
