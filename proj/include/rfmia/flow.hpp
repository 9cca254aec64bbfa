#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rfmia/mlp.hpp"
#include "rfmia/rng.hpp"
#include "rfmia/synth_data.hpp"

namespace rfmia {

enum class PathKind { RectifiedFlow, OtCfm };

struct FlowPath {
  PathKind kind = PathKind::RectifiedFlow;
  double sigma_min = 0.0;  // OT-CFM only

  void validate() const;
  std::string descriptor() const;
};

struct Interpolant {
  std::vector<double> x_t;
  std::vector<double> v_target;
};

Interpolant interpolate(const FlowPath& path, std::span<const double> x1, std::span<const double> x0,
                        double t);

enum class SamplerKind { Uniform, SymExp };

inline constexpr double kTimeClampMin = 1e-5;
inline constexpr double kTimeClampMax = 1.0 - 1e-5;

struct TimestepSampler {
  SamplerKind kind = SamplerKind::Uniform;
  double alpha = 4.0;  // SymExp only
  double t_min = kTimeClampMin;
  double t_max = kTimeClampMax;

  void validate() const;
  std::string descriptor() const;
};

double sample_t(const TimestepSampler& sampler, Rng& rng);

/// Density of the symmetric exponential law on [0, 1].
double symexp_pdf(double t, double alpha);
/// Its cumulative distribution on [0, 1].
double symexp_cdf(double t, double alpha);
/// CDF of the values emitted by sample_t (includes the affine clamp map).
double sampler_cdf(const TimestepSampler& sampler, double t);

/// Mean over batch and dimensions of (v_target - v(x_t, t))^2.
/// x1, x0 are [B, D]; t has B entries.
Tensor cfm_loss(const VelocityField& model, const Tensor& x1, const Tensor& x0,
                std::span<const double> t, const FlowPath& path);

struct TrainConfig {
  std::uint64_t steps = 2000;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  FlowPath path;
  TimestepSampler sampler;
  std::uint64_t log_interval = 100;
  std::uint64_t checkpoint_interval = 100;
  /// Fixed (x0, t) draws per sample for the logged train/val losses.
  std::size_t eval_draws = 4;

  void validate() const;
};

struct DynamicsRow {
  std::uint64_t step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_ms = 0.0;
};

struct DynamicsLog {
  std::vector<DynamicsRow> rows;

  std::string to_csv(std::string_view header_comment = {}) const;
};

struct TrainHooks {
  /// Called at every log interval (including step 0) with the current model.
  std::function<void(std::uint64_t step, const MlpVelocityModel&)> on_log;
  /// When set, each checkpoint is also written to dir/ckpt_<step>.bin.
  std::filesystem::path checkpoint_dir;
};

struct TrainResult {
  MlpVelocityModel model;
  std::vector<std::pair<std::uint64_t, MlpVelocityModel>> checkpoints;  // includes step 0
  DynamicsLog log;
};

/// Trains on ds.members only. Throws NumericError on a non-finite loss.
TrainResult train(const PatchDataset& ds, const MlpVelocityModel& init, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Fixed-noise CFM loss over a sample list, evaluated without the tape.
double evaluation_loss(const VelocityField& model, std::span<const Sample> samples,
                       const FlowPath& path, std::uint64_t seed, std::size_t draws);

}  // namespace rfmia
