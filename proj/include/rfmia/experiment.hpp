#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rfmia/flow.hpp"
#include "rfmia/likelihood.hpp"
#include "rfmia/linear_baseline.hpp"
#include "rfmia/metrics.hpp"
#include "rfmia/mia.hpp"
#include "rfmia/mlp.hpp"
#include "rfmia/synth_data.hpp"

namespace rfmia {

inline constexpr std::string_view kToolkitVersion = "0.1.0";
inline constexpr std::string_view kOutputRootEnv = "RFMIA_OUTPUT_ROOT";

enum class SkipKind { None, Isotropic };

struct SamplerVariant {
  std::string name;
  TimestepSampler sampler;
};

struct AttackSpec {
  Statistic statistic = Statistic::McCal;
  double t = 0.5;
  std::size_t n_mc = 5;
};

/// Everything an experiment needs. All randomness derives from `seed`
/// through the named streams dataset / model / train / attack / likelihood.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "rfmia-run";

  GeneratorConfig dataset;  // dataset.seed is derived, not read

  struct Model {
    std::vector<std::size_t> hidden = {128, 128, 128};
    double output_gain = 0.0;
    SkipKind skip = SkipKind::Isotropic;
  } model;

  struct Training {
    std::uint64_t steps = 4000;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::uint64_t log_interval = 200;
    std::uint64_t checkpoints = 20;
    FlowPath path;
    std::vector<SamplerVariant> samplers = {
        {"uniform", {SamplerKind::Uniform}},
        {"symexp4", {SamplerKind::SymExp, 4.0}},
    };
  } training;

  struct Attack {
    std::vector<AttackSpec> attacks = {
        {Statistic::Naive, 0.5, 1},
        {Statistic::NaiveCal, 0.5, 1},
        {Statistic::Mc, 0.5, 5},
        {Statistic::McCal, 0.5, 5},
    };
    std::size_t t_grid_points = 21;
    std::vector<std::size_t> n_mc_list = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  } attack;

  struct Analysis {
    bool lmmse = true;
    std::size_t gap_draws = kDefaultGapDraws;
    bool likelihood = true;
    std::size_t likelihood_steps = 64;
    std::size_t likelihood_probes = 2;
    bool mmd = true;
    std::size_t mmd_samples = 512;
    std::size_t mmd_reference = 512;  // fresh generator patches, not members
    std::size_t mmd_steps = 32;
  } analysis;

  /// Throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  /// Throws ConfigError on unknown keys or mistyped values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// 16 hex digits over the canonical JSON, output_dir excluded.
  std::string hash() const;

  GeneratorConfig generator() const;
  MlpConfig mlp_config() const;
  TrainConfig train_config(const SamplerVariant& variant) const;
  AttackConfig attack_config(Statistic statistic, double t, std::size_t n_mc) const;
  LikelihoodConfig likelihood_config() const;
  std::vector<double> t_grid() const;
  std::uint64_t checkpoint_interval() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a config tree. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& tree, std::string_view assignment);

/// n = 32 per split, 4x4 patches, 500 steps.
ExperimentConfig smoke_config();

/// output_dir, placed under $RFMIA_OUTPUT_ROOT when that is set and the
/// directory is relative.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

/// "# rfmia <version> config=<hash>"
std::string provenance_line(const ExperimentConfig& cfg);

// Analyses shared by the pipeline, the CLI and the acceptance run.

struct NmcRow {
  std::size_t n_mc = 1;
  double auc_mc = 0.5;
  double auc_mc_cal = 0.5;
};

struct NmcTable {
  double t = 0.5;
  std::vector<NmcRow> rows;

  std::string to_csv(std::string_view header_comment = {}) const;
};

/// AUC of T_mc and T_mc_cal at time t for every N in cfg.attack.n_mc_list.
NmcTable sweep_nmc(const ExperimentConfig& cfg, const VelocityField& model, const PatchDataset& ds, double t);

struct DynamicsPoint {
  std::uint64_t step = 0;
  double peak_auc = 0.5;  // max over the t grid of AUC(T_mc_cal)
  double peak_t = 0.5;
  double mmd = 0.0;       // NaN when MMD is disabled
};

struct VariantSeries {
  std::string name;
  std::string sampler;
  std::vector<DynamicsPoint> points;
};

VariantSeries dynamics_series(const ExperimentConfig& cfg, const PatchDataset& ds, const SamplerVariant& variant,
                              const TrainResult& run);

/// Unbiased MMD^2 between samples generated by the model and fresh patches
/// from the dataset's generator (indices past the member/nonmember pool).
double model_mmd(const ExperimentConfig& cfg, const VelocityField& model, const PatchDataset& ds);

struct SamplerComparison {
  std::vector<VariantSeries> variants;

  std::string to_csv(std::string_view header_comment = {}) const;
  std::string mmd_csv(std::string_view header_comment = {}) const;
};

/// Needs at least two variants sharing one step grid; throws ConfigError
/// otherwise.
SamplerComparison compare_samplers(std::vector<VariantSeries> series);

// Pipeline.

enum class Stage { Data, Train, Attack, SweepT, SweepNmc, LmmseGap, Likelihood, CompareSamplers, Report };

std::string stage_name(Stage s);
Stage parse_stage(std::string_view name);

struct StageStatus {
  std::string name;
  std::string status;  // ran | resumed | skipped | failed | not-run
  std::string error;
  std::vector<std::string> files;
};

struct ExperimentReport {
  std::filesystem::path dir;
  std::vector<StageStatus> stages;
  std::optional<std::string> failed_stage;
  nlohmann::json summary;

  bool ok() const { return !failed_stage.has_value(); }
};

struct RunOptions {
  /// Last stage to run; earlier stages run or resume as needed.
  Stage until = Stage::Report;
  /// Recompute stages even when their artifacts are present.
  bool force = false;
};

/// Runs (or resumes) the pipeline into resolve_output_dir(cfg). Stage
/// failures are caught and recorded; outputs written so far are kept.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// JSON schema the summary is checked against.
const nlohmann::json& summary_schema();
/// Problems found when checking `summary` against summary_schema(); empty
/// when valid.
std::vector<std::string> validate_summary(const nlohmann::json& summary);

}  // namespace rfmia
