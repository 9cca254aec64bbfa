#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfmia/complexity.hpp"
#include "rfmia/mlp.hpp"
#include "rfmia/rng.hpp"
#include "rfmia/synth_data.hpp"

namespace rfmia {

enum class Statistic { Naive, Mc, NaiveCal, McCal };

std::string statistic_name(Statistic s);
Statistic parse_statistic(std::string_view name);

struct AttackConfig {
  Statistic statistic = Statistic::McCal;
  double t = 0.5;
  std::size_t n_mc = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// ||x - (v(t x + (1-t) eps, t) + eps)||^2
double t_naive(const VelocityField& model, std::span<const double> x, double t,
               std::span<const double> eps);

/// ||x - mean_n v(t x + (1-t) eps_n, t)||^2 with n_mc fresh draws from rng.
double t_mc(const VelocityField& model, std::span<const double> x, double t, std::size_t n_mc, Rng& rng);

double t_mc_cal(const VelocityField& model, std::span<const double> x, double t, std::size_t n_mc,
                Rng& rng, const ComplexityMeter& complexity);

double t_naive_cal(const VelocityField& model, std::span<const double> x, double t,
                   std::span<const double> eps, const ComplexityMeter& complexity);

struct ScoreRow {
  std::uint64_t id = 0;
  bool is_member = false;
  double score = 0.0;
  std::uint32_t complexity_bytes = 0;
  double t = 0.0;
  Statistic statistic = Statistic::Mc;
  std::size_t n_mc = 1;
  std::uint64_t seed = 0;  // per-sample noise seed
};

/// Rows in ascending sample-id order. Lower score means "member".
struct AttackScoreTable {
  std::vector<ScoreRow> rows;

  std::vector<double> member_scores() const;
  std::vector<double> nonmember_scores() const;
  std::string to_csv(std::string_view header_comment = {}) const;
};

/// Per-sample noise seed used by score_dataset.
std::uint64_t attack_sample_seed(std::uint64_t attack_seed, std::uint64_t sample_id);

/// Scores every member and nonmember of ds. Complexity comes from
/// Sample::complexity when filled, otherwise it is computed.
AttackScoreTable score_dataset(const VelocityField& model, const PatchDataset& ds, const AttackConfig& cfg);

}  // namespace rfmia
