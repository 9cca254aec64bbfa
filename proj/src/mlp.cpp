#include "rfmia/mlp.hpp"

#include <cmath>

#include "rfmia/errors.hpp"
#include "rfmia/rng.hpp"

namespace rfmia {

Tensor VelocityField::velocity(const Tensor& x, double t) const {
  if (x.rank() != 2) throw DimensionError("velocity: expected [B, D], got " + shape_str(x.shape()));
  std::vector<double> ts(x.dim(0), t);
  return velocity(x, std::span<const double>(ts));
}

std::vector<double> VelocityField::velocity_at(std::span<const double> x, double t) const {
  GradModeGuard no_grad(false);
  Tensor in(Shape{1, x.size()}, std::vector<double>(x.begin(), x.end()));
  Tensor out = velocity(in, t);
  return std::vector<double>(out.data().begin(), out.data().end());
}

void LinearSkip::validate() const {
  const std::size_t d = mean.size();
  if (d == 0 || eigenvalues.size() != d || eigenvectors.size() != d * d) {
    throw DimensionError("linear skip: inconsistent moment sizes");
  }
  if (!(ridge > 0.0)) throw ConfigError("linear skip: ridge must be positive");
}

LinearSkip isotropic_skip(std::size_t dim) {
  LinearSkip skip;
  skip.mean.assign(dim, 0.0);
  skip.eigenvalues.assign(dim, 1.0);
  skip.eigenvectors.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) skip.eigenvectors[i * dim + i] = 1.0;
  return skip;
}

Tensor LinearSkip::apply(const Tensor& x, std::span<const double> t) const {
  const std::size_t d = dim();
  const std::size_t b = x.dim(0);
  if (x.rank() != 2 || x.dim(1) != d || t.size() != b) throw DimensionError("linear skip: bad input shape");
  std::vector<double> ut(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) ut[j * d + i] = eigenvectors[i * d + j];
  const Tensor u(Shape{d, d}, eigenvectors);
  const Tensor u_t(Shape{d, d}, ut);
  // Mean expressed in the eigenbasis.
  std::vector<double> mu_e(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k) mu_e[k] += eigenvectors[i * d + k] * mean[i];
  Tensor gains(Shape{b, d});
  Tensor offsets(Shape{b, d});
  for (std::size_t r = 0; r < b; ++r) {
    const double s = t[r];
    std::vector<double> shifted(d);
    for (std::size_t k = 0; k < d; ++k) {
      const double g = (s * eigenvalues[k] - (1.0 - s)) / (s * s * eigenvalues[k] + (1.0 - s) * (1.0 - s) + ridge);
      gains.data()[r * d + k] = g;
      shifted[k] = g * s * mu_e[k];
    }
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += eigenvectors[i * d + k] * shifted[k];
      offsets.data()[r * d + i] = mean[i] - acc;
    }
  }
  return ad::add(ad::matmul(ad::mul(ad::matmul(x, u), gains), u_t), offsets);
}

std::vector<double> time_embedding(double t, std::size_t width) {
  std::vector<double> out(width);
  const std::size_t pairs = width / 2;
  for (std::size_t k = 0; k < pairs; ++k) {
    const double frac = pairs > 1 ? static_cast<double>(k) / static_cast<double>(pairs - 1) : 0.0;
    const double omega = std::pow(64.0, frac);
    out[2 * k] = std::sin(omega * t);
    out[2 * k + 1] = std::cos(omega * t);
  }
  return out;
}

MlpVelocityModel::MlpVelocityModel(std::vector<std::size_t> widths, std::size_t embed_width)
    : widths_(std::move(widths)), embed_width_(embed_width) {
  if (widths_.size() < 2) throw ConfigError("mlp: need at least input and output widths");
  for (std::size_t w : widths_) {
    if (w == 0) throw ConfigError("mlp: layer widths must be positive");
  }
  if (widths_.front() != widths_.back() + embed_width_) {
    throw DimensionError("mlp: input width " + std::to_string(widths_.front()) +
                         " != data dim " + std::to_string(widths_.back()) + " + embedding " +
                         std::to_string(embed_width_));
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    weights_.emplace_back(Shape{widths_[l + 1], widths_[l]}, 0.0);
    biases_.emplace_back(Shape{widths_[l + 1]}, 0.0);
    weights_.back().set_requires_grad();
    biases_.back().set_requires_grad();
  }
}

MlpVelocityModel MlpVelocityModel::initialized(const MlpConfig& cfg) {
  std::vector<std::size_t> widths{cfg.data_dim + kTimeEmbeddingWidth};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.data_dim);
  MlpVelocityModel model(widths);
  model.seed = cfg.seed;
  if (cfg.linear_skip) {
    cfg.linear_skip->validate();
    if (cfg.linear_skip->dim() != cfg.data_dim) throw DimensionError("mlp: linear skip dimension mismatch");
    model.linear_skip = cfg.linear_skip;
  }
  Rng rng(derive_seed(cfg.seed, "mlp-init"));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const double fan_in = static_cast<double>(widths[l]);
    double std_dev = 1.0 / std::sqrt(fan_in);
    if (l + 1 == model.num_layers()) std_dev *= cfg.output_gain;
    for (double& w : model.weights_[l].data()) w = std_dev * rng.normal();
  }
  return model;
}

Tensor MlpVelocityModel::velocity(const Tensor& x, std::span<const double> t) const {
  if (x.rank() != 2 || x.dim(1) != data_dim()) {
    throw DimensionError("mlp: expected input [B, " + std::to_string(data_dim()) + "], got " +
                         shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  if (t.size() != batch) {
    throw DimensionError("mlp: " + std::to_string(t.size()) + " times for batch of " +
                         std::to_string(batch));
  }
  std::vector<double> emb(batch * embed_width_);
  for (std::size_t r = 0; r < batch; ++r) {
    if (!(t[r] >= 0.0 && t[r] <= 1.0)) throw ArgumentError("mlp: t outside [0, 1]");
    const auto e = time_embedding(t[r], embed_width_);
    std::copy(e.begin(), e.end(), emb.begin() + static_cast<std::ptrdiff_t>(r * embed_width_));
  }
  Tensor h = ad::concat_cols(x, Tensor(Shape{batch, embed_width_}, std::move(emb)));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = ad::linear(h, weights_[l], biases_[l]);
    if (l + 1 < weights_.size()) h = ad::gelu(h);
  }
  if (linear_skip) h = ad::add(h, linear_skip->apply(x, t));
  return h;
}

std::vector<Tensor> MlpVelocityModel::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

std::size_t MlpVelocityModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

MlpVelocityModel MlpVelocityModel::clone() const {
  MlpVelocityModel copy(widths_, embed_width_);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    std::copy(weights_[l].data().begin(), weights_[l].data().end(), copy.weights_[l].data().begin());
    std::copy(biases_[l].data().begin(), biases_[l].data().end(), copy.biases_[l].data().begin());
  }
  copy.seed = seed;
  copy.train_step = train_step;
  copy.sampler_descriptor = sampler_descriptor;
  copy.linear_skip = linear_skip;
  return copy;
}

Tensor forward(const VelocityField& model, const Tensor& x_t, double t) {
  if (x_t.rank() != 1 || x_t.size() != model.data_dim()) {
    throw DimensionError("forward: expected [" + std::to_string(model.data_dim()) + "], got " +
                         shape_str(x_t.shape()));
  }
  if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("forward: t outside [0, 1]");
  Tensor out = model.velocity(ad::reshape(x_t, Shape{1, x_t.size()}), t);
  return ad::reshape(out, Shape{out.size()});
}

}  // namespace rfmia
