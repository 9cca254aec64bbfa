#include "rfmia/flow.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "rfmia/checkpoint.hpp"
#include "rfmia/adam.hpp"
#include "rfmia/errors.hpp"
#include "rfmia/io.hpp"

namespace rfmia {

void FlowPath::validate() const {
  if (kind == PathKind::OtCfm && !(sigma_min >= 0.0 && sigma_min < 1.0)) {
    throw ConfigError("flow path: sigma_min must lie in [0, 1)");
  }
}

std::string FlowPath::descriptor() const {
  if (kind == PathKind::RectifiedFlow) return "rf";
  return "otcfm(sigma_min=" + io::fmt_double(sigma_min) + ")";
}

Interpolant interpolate(const FlowPath& path, std::span<const double> x1, std::span<const double> x0,
                        double t) {
  path.validate();
  if (x1.size() != x0.size()) throw DimensionError("interpolate: x1 and x0 differ in size");
  if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("interpolate: t outside [0, 1]");
  // With sigma = 0 both coefficients reduce exactly to the rectified-flow ones.
  const double sigma = path.kind == PathKind::OtCfm ? path.sigma_min : 0.0;
  const double noise_coef = 1.0 - (1.0 - sigma) * t;
  const double target_coef = 1.0 - sigma;
  Interpolant out{std::vector<double>(x1.size()), std::vector<double>(x1.size())};
  for (std::size_t i = 0; i < x1.size(); ++i) {
    out.x_t[i] = t * x1[i] + noise_coef * x0[i];
    out.v_target[i] = x1[i] - target_coef * x0[i];
  }
  return out;
}

void TimestepSampler::validate() const {
  if (kind == SamplerKind::SymExp && !(alpha > 0.0)) {
    throw ConfigError("sampler: SymExp alpha must be positive");
  }
  if (!(t_min >= 0.0 && t_min < t_max && t_max <= 1.0)) throw ConfigError("sampler: invalid clamp");
}

std::string TimestepSampler::descriptor() const {
  if (kind == SamplerKind::Uniform) return "uniform";
  return "symexp(alpha=" + io::fmt_double(alpha) + ")";
}

double sample_t(const TimestepSampler& sampler, Rng& rng) {
  sampler.validate();
  if (sampler.kind == SamplerKind::Uniform) return rng.uniform(sampler.t_min, sampler.t_max);
  const double u = rng.uniform();
  const double a = sampler.alpha;
  // Inverse CDF of Exp(alpha) truncated to [0, 1].
  double t = -std::log1p(u * std::expm1(-a)) / a;
  t = std::clamp(t, 0.0, 1.0);
  if (rng.uniform() < 0.5) t = 1.0 - t;
  return sampler.t_min + (sampler.t_max - sampler.t_min) * t;
}

double symexp_pdf(double t, double alpha) {
  if (!(alpha > 0.0)) throw ArgumentError("symexp_pdf: alpha must be positive");
  if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("symexp_pdf: t outside [0, 1]");
  return alpha / (-2.0 * std::expm1(-alpha)) * (std::exp(-alpha * t) + std::exp(-alpha * (1.0 - t)));
}

double symexp_cdf(double t, double alpha) {
  if (!(alpha > 0.0)) throw ArgumentError("symexp_cdf: alpha must be positive");
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return (-std::expm1(-alpha * t) + std::exp(-alpha) * std::expm1(alpha * t)) /
         (-2.0 * std::expm1(-alpha));
}

double sampler_cdf(const TimestepSampler& sampler, double t) {
  const double s = std::clamp((t - sampler.t_min) / (sampler.t_max - sampler.t_min), 0.0, 1.0);
  return sampler.kind == SamplerKind::Uniform ? s : symexp_cdf(s, sampler.alpha);
}

Tensor cfm_loss(const VelocityField& model, const Tensor& x1, const Tensor& x0,
                std::span<const double> t, const FlowPath& path) {
  if (x1.rank() != 2 || x1.shape() != x0.shape()) {
    throw DimensionError("cfm_loss: x1 and x0 must share shape [B, D]");
  }
  const std::size_t b = x1.dim(0);
  const std::size_t d = x1.dim(1);
  if (b == 0) throw ArgumentError("cfm_loss: empty batch");
  if (t.size() != b) throw DimensionError("cfm_loss: need one t per row");
  Tensor xt(Shape{b, d});
  Tensor target(Shape{b, d});
  for (std::size_t r = 0; r < b; ++r) {
    const auto ip = interpolate(path, x1.data().subspan(r * d, d), x0.data().subspan(r * d, d), t[r]);
    std::copy(ip.x_t.begin(), ip.x_t.end(), xt.data().begin() + static_cast<std::ptrdiff_t>(r * d));
    std::copy(ip.v_target.begin(), ip.v_target.end(),
              target.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return ad::mean(ad::square(ad::sub(target, model.velocity(xt, t))));
}

void TrainConfig::validate() const {
  path.validate();
  sampler.validate();
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (log_interval == 0 || checkpoint_interval == 0) throw ConfigError("train: intervals must be positive");
  if (steps % log_interval != 0) throw ConfigError("train: log interval must divide steps");
  if (eval_draws == 0) throw ConfigError("train: eval_draws must be positive");
}

std::string DynamicsLog::to_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "step,train_loss,val_loss,wall_ms\n";
  for (const auto& r : rows) {
    os << r.step << ',' << io::fmt_double(r.train_loss) << ',' << io::fmt_double(r.val_loss) << ','
       << io::fmt_double(r.wall_ms) << '\n';
  }
  return os.str();
}

double evaluation_loss(const VelocityField& model, std::span<const Sample> samples,
                       const FlowPath& path, std::uint64_t seed, std::size_t draws) {
  if (samples.empty()) return std::nan("");
  GradModeGuard no_grad(false);
  const std::size_t d = model.data_dim();
  const std::size_t b = samples.size() * draws;
  Tensor x1(Shape{b, d});
  Tensor x0(Shape{b, d});
  std::vector<double> ts(b);
  std::size_t row = 0;
  for (const Sample& s : samples) {
    if (s.x.size() != d) throw DimensionError("evaluation_loss: sample dimension mismatch");
    Rng rng(derive_seed(seed, s.id));
    for (std::size_t k = 0; k < draws; ++k, ++row) {
      std::copy(s.x.begin(), s.x.end(), x1.data().begin() + static_cast<std::ptrdiff_t>(row * d));
      for (std::size_t j = 0; j < d; ++j) x0.data()[row * d + j] = rng.normal();
      ts[row] = rng.uniform(kTimeClampMin, kTimeClampMax);
    }
  }
  return cfm_loss(model, x1, x0, ts, path).item();
}

namespace {

void check_finite_parameters(const MlpVelocityModel& model, std::uint64_t step) {
  for (const Tensor& p : model.parameters()) {
    for (double v : p.data()) {
      if (!std::isfinite(v)) {
        throw NumericError("train: non-finite parameter at step " + std::to_string(step));
      }
    }
  }
}

}  // namespace

TrainResult train(const PatchDataset& ds, const MlpVelocityModel& init, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (ds.members.empty()) throw ArgumentError("train: dataset has no members");
  if (init.data_dim() != ds.dim()) throw DimensionError("train: model and dataset dimensions differ");

  const auto start = std::chrono::steady_clock::now();
  const std::size_t d = ds.dim();
  const std::size_t n = ds.members.size();
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");

  TrainResult result{init.clone(), {}, {}};
  MlpVelocityModel& model = result.model;
  model.sampler_descriptor = cfg.sampler.descriptor();
  model.train_step = 0;
  std::vector<Tensor> params = model.parameters();
  OptimizerState opt(cfg.lr);
  Rng rng(derive_seed(cfg.seed, "train"));

  auto log_row = [&](std::uint64_t step) {
    check_finite_parameters(model, step);
    DynamicsRow row;
    row.step = step;
    row.train_loss = evaluation_loss(model, ds.members, cfg.path, eval_seed, cfg.eval_draws);
    row.val_loss = evaluation_loss(model, ds.nonmembers, cfg.path, eval_seed, cfg.eval_draws);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.rows.push_back(row);
    if (hooks.on_log) hooks.on_log(step, model);
  };
  auto checkpoint = [&](std::uint64_t step) {
    result.checkpoints.emplace_back(step, model.clone());
    result.checkpoints.back().second.train_step = step;
    result.checkpoints.back().second.seed = model.seed;
    result.checkpoints.back().second.sampler_descriptor = model.sampler_descriptor;
    if (!hooks.checkpoint_dir.empty()) {
      save_checkpoint(result.checkpoints.back().second,
                      hooks.checkpoint_dir / ("ckpt_" + std::to_string(step) + ".bin"));
    }
  };

  log_row(0);
  checkpoint(0);

  Tensor x1(Shape{cfg.batch_size, d});
  std::vector<double> ts(cfg.batch_size);
  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    Tensor x0(Shape{cfg.batch_size, d});
    for (std::size_t r = 0; r < cfg.batch_size; ++r) {
      const Sample& s = ds.members[rng.below(n)];
      std::copy(s.x.begin(), s.x.end(), x1.data().begin() + static_cast<std::ptrdiff_t>(r * d));
      for (std::size_t j = 0; j < d; ++j) x0.data()[r * d + j] = rng.normal();
      ts[r] = sample_t(cfg.sampler, rng);
    }
    Tensor loss = cfm_loss(model, x1, x0, ts, cfg.path);
    if (!std::isfinite(loss.item())) {
      throw NumericError("train: non-finite loss at step " + std::to_string(step));
    }
    backward(loss);
    adam_step(opt, params);
    model.train_step = step;
    if (step % cfg.log_interval == 0) log_row(step);
    if (step % cfg.checkpoint_interval == 0 || step == cfg.steps) checkpoint(step);
  }
  return result;
}

}  // namespace rfmia
