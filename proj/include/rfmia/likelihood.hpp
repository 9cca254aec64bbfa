#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfmia/mlp.hpp"
#include "rfmia/rng.hpp"
#include "rfmia/synth_data.hpp"

namespace rfmia {

enum class TraceMode { HutchinsonAutodiff, ExactSmallD };

struct LikelihoodConfig {
  std::size_t n_steps = 64;
  std::size_t k = 2;  // Hutchinson probes
  std::uint64_t seed = 0;
  TraceMode mode = TraceMode::HutchinsonAutodiff;
  /// Probes are drawn once per trajectory and reused at every ODE stage.
  static constexpr bool kProbeReuse = true;

  void validate() const;
};

struct LikelihoodResult {
  double logp = 0.0;
  std::vector<double> x0;
  /// Integral of the Jacobian trace from t = 0 to 1.
  double divergence_integral = 0.0;
};

double standard_normal_logpdf(std::span<const double> x);

/// Integrates dx/dt = v(x, t) from t = 1 to 0 with fixed-step RK4 and
/// returns log p0(x0) - int_0^1 Tr(dv/dx) dt. Throws NumericError carrying
/// the failing t when the state stops being finite.
LikelihoodResult log_likelihood(const VelocityField& model, std::span<const double> x1,
                                const LikelihoodConfig& cfg);

/// (1/K) sum_k eps_k^T (dv/dx) eps_k with eps_k ~ N(0, I).
double hutchinson_trace(const VelocityField& model, std::span<const double> x, double t, std::size_t k,
                        Rng& rng);
/// Exact Tr(dv/dx) from D vector-Jacobian products.
double exact_trace(const VelocityField& model, std::span<const double> x, double t);

/// Velocity at x and the probe estimate sum_k e_k^T J e_k / K for given
/// probes (K rows of length D). Shared by both trace modes.
std::pair<std::vector<double>, double> velocity_and_trace(const VelocityField& model,
                                                          std::span<const double> x, double t,
                                                          std::span<const double> probes, std::size_t k);

struct StudyRow {
  std::uint64_t id = 0;
  double logp = 0.0;
  std::uint32_t complexity_bytes = 0;
};

struct LikelihoodStudy {
  std::vector<StudyRow> rows;
  double pearson = 0.0;
  double spearman = 0.0;

  std::string to_csv(std::string_view header_comment = {}) const;
};

/// Per-nonmember log-likelihood against compressed size.
LikelihoodStudy likelihood_complexity_study(const VelocityField& model, const PatchDataset& ds,
                                            const LikelihoodConfig& cfg);

/// Samples drawn by integrating the flow forward from Gaussian noise.
std::vector<std::vector<double>> generate_samples(const VelocityField& model, std::size_t n,
                                                  std::size_t n_steps, std::uint64_t seed);

}  // namespace rfmia
