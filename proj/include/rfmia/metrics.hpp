#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rfmia/mia.hpp"

namespace rfmia {

/// P(member score < nonmember score) with ties counted 1/2.
double auc(std::span<const double> member_scores, std::span<const double> nonmember_scores);
double auc(const AttackScoreTable& table);

/// Largest TPR of "score <= tau => member" with empirical FPR <= level.
double tpr_at_fpr(std::span<const double> member_scores, std::span<const double> nonmember_scores,
                  double fpr_level);
double tpr_at_fpr(const AttackScoreTable& table, double fpr_level);

/// 1-based ranks, ties replaced by their average rank.
std::vector<double> average_ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

/// Median pairwise Euclidean distance over the pooled samples.
double median_heuristic_bandwidth(const std::vector<std::vector<double>>& a,
                                  const std::vector<std::vector<double>>& b);

/// Unbiased MMD^2 with kernel exp(-||a-b||^2 / (2 h^2)). A bandwidth <= 0
/// selects the median heuristic.
double mmd_fidelity(const std::vector<std::vector<double>>& generated,
                    const std::vector<std::vector<double>>& reference, double bandwidth = 0.0);

struct RocReport {
  double auc = 0.5;
  std::map<double, double> tpr_at_fpr;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  double member_mean = 0.0;
  double nonmember_mean = 0.0;
  std::string orientation = "lower score => member";
};

RocReport roc_report(const AttackScoreTable& table, std::span<const double> fpr_levels = {});

/// 21 evenly spaced points on [0, 1], endpoints moved into the clamp interval.
std::vector<double> default_t_grid(std::size_t points = 21);

struct SweepRow {
  double t = 0.0;
  double auc = 0.5;
  double tpr_at_1pct = 0.0;
  Statistic statistic = Statistic::Mc;
  std::size_t n_mc = 1;
};

struct SweepTable {
  std::vector<SweepRow> rows;

  const SweepRow& best() const;  // max AUC, earliest t on ties
  std::string to_csv(std::string_view header_comment = {}) const;
};

/// One score table per t (cfg.t is overridden), folded into AUC and TPR@1%.
SweepTable sweep_auc_over_t(const VelocityField& model, const PatchDataset& ds, const AttackConfig& cfg,
                            std::span<const double> t_grid);

}  // namespace rfmia
