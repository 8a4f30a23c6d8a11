#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "misodelay/config.hpp"

namespace misodelay {

struct RatePolicy;

/// Quantization of the estimated-SNR law into equal-probability cells.
struct MuGrid {
  std::vector<double> points;  // representative μ per cell (the conditional median)
  std::vector<double> probs;
  std::vector<double> edges;   // size N + 1, edges.back() = +inf
  double mu_max = 0.0;         // 1 - 1e-9 quantile, used to size rate grids
  // Gauss-Legendre nodes in probability inside each cell, for cell-averaged error probabilities.
  // sub_points[i * sub_weights.size() + q] lies in cell i; the weights sum to 1.
  std::vector<double> sub_points;
  std::vector<double> sub_weights;

  std::size_t size() const { return points.size(); }
  /// Index of the cell containing `mu`.
  std::size_t cell_of(double mu) const;
};

/// μ = ρ c X with X ~ Gamma(m, 1). c = 1 - σ_e² when `shrink`, else 1. `n_sub` is 1, 2, 4 or 8;
/// with 1 the only sub-point is the cell median.
MuGrid make_mu_grid(const DerivedBudget& budget, std::size_t n_cells = 512, bool shrink = true, int n_sub = 4);

/// log E[(1 + ρξ)^{-s̃}], ξ ~ Gamma(m, 1), s̃ = s n_d / ln 2. Uses the finite series when it is
/// well conditioned and log-scaled quadrature otherwise.
double log_mellin_ideal(const DerivedBudget& budget, double s);
double mellin_ideal(const DerivedBudget& budget, double s);

/// Raw finite series in s̃ without the conditioning guard. `condition` receives
/// Σ|terms| / |Σ terms|.
double mellin_ideal_series(int m, double rho, double s_tilde, double* condition = nullptr);
/// Same quantity by adaptive quadrature, in log form.
double log_mellin_ideal_quadrature(int m, double rho, double s_tilde);

/// log Σ p_i [(1 - ε_i) e^{-s n_d r_i} + ε_i]
double log_mellin_quantized(const MuGrid& grid, const RatePolicy& policy, const DerivedBudget& budget, double s);
double mellin_quantized(const MuGrid& grid, const RatePolicy& policy, const DerivedBudget& budget, double s);

/// log(p_a e^{log_a} + p_b e^{log_b})
double log_mellin_mixed(const GroupSplit& split, double log_a, double log_b);
double mellin_mixed(const GroupSplit& split, double mellin_a, double mellin_b);

enum class ServiceTag { Ideal, QuantizedPolicy, MixedGroups };

/// s ↦ log 𝓜_𝒮(1 - s) together with the mean service per scheduling opportunity.
struct ServiceMellin {
  ServiceTag tag = ServiceTag::Ideal;
  std::function<double(double)> log_eval;
  double mean_bits = 0.0;  // E[n R Z] per superframe

  double operator()(double s) const { return std::exp(log_eval(s)); }
  /// Bits per slot for a superframe of `superframe_len` slots.
  double expected_service(int superframe_len) const { return mean_bits / superframe_len; }
};

/// E[log2(1 + ρξ)], ξ ~ Gamma(m, 1).
double mean_rate_ideal(const DerivedBudget& budget);
/// Σ p_i (1 - ε_i) r_i
double mean_rate_policy(const MuGrid& grid, const RatePolicy& policy);

ServiceMellin ideal_service(const DerivedBudget& budget);
/// The policy is fixed; use rate_adaptation for s-dependent policies.
ServiceMellin quantized_service(const MuGrid& grid, const RatePolicy& policy, const DerivedBudget& budget);
ServiceMellin mixed_service(const GroupSplit& split, ServiceMellin a, ServiceMellin b);

/// Same model with log_eval results cached per s (thread-safe).
ServiceMellin memoized(ServiceMellin model);

/// Expected service per slot for `model` on superframes of `superframe_len` slots.
double expected_service(const ServiceMellin& model, int superframe_len);

}  // namespace misodelay
