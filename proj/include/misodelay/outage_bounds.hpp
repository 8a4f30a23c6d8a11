#pragma once

#include <cstdint>
#include <string_view>

#include "misodelay/config.hpp"

namespace misodelay {

/// Sufficient statistics of one channel estimate for the conditional outage approximations.
struct EstimateStats {
  double mu = 0.0;          // estimated receive SNR ρ|ĥ₁ᴴv₁|²
  double sigma_s_sq = 0.0;  // 2 σ_e² ρ μ
  int nu = 0;               // K - 1 interferers
  double lambda_u = 0.0;    // ρ σ_e², per-interferer mean
  double lambda_c = 0.0;    // ρ σ_e² (K - 1), fully correlated interference
  double n_data = 0.0;      // data channel uses; +inf disables blocklength effects
  double sigma_cf_sq = 0.0; // sigma_s_sq plus the finite-blocklength variance
};

/// Builds the statistics for an estimate with SNR `mu` under `budget`. With
/// `finite_blocklength` false the blocklength is treated as infinite.
EstimateStats make_estimate_stats(const DerivedBudget& budget, double mu, bool finite_blocklength);

double dispersion_iid(double snr);
double dispersion_awgn(double snr);

/// B_l(x) = ∫_x^∞ t^l φ_σ(t) dt by the integration-by-parts recursion.
double b_integral(int l, double x, double sigma_sq);

/// Outage approximation assuming mutually orthogonal interferers (approximate lower bound).
double pout_lower(const EstimateStats& stats, double rate);

/// Outage approximation assuming fully correlated interferers (approximate upper bound).
double pout_upper(const EstimateStats& stats, double rate);

/// Variance of the combined Gaussian term under imperfect CSI and finite blocklength.
double fbl_sigma(const EstimateStats& stats);

/// Error probability under imperfect CSI and finite blocklength, correlated interference.
double fbl_error_upper(const EstimateStats& stats, double rate);

/// Uncorrelated interference with the finite-blocklength variance. Not a bound in either
/// direction; kept for exploration only.
double fbl_error_uncorrelated_nonbound(const EstimateStats& stats, double rate);

enum class BoundKind { UpperCorrelated, FblUpperCorrelated, LowerUncorrelated };

std::string_view to_string(BoundKind kind);

/// Dispatches to the bound selected by `kind`. Rate 0 yields 0 (nothing can be lost).
double error_probability(BoundKind kind, const EstimateStats& stats, double rate);

/// Largest rate whose error probability under `kind` does not exceed `target`, by bisection on
/// [0, r_hi]. Assumes the error probability is nondecreasing in rate.
double rate_at_error(BoundKind kind, const EstimateStats& stats, double target, double r_hi = 30.0);

/// Number of times any bound returned a value outside [0,1] that had to be clamped.
std::uint64_t clamp_event_count();
void reset_clamp_event_count();

}  // namespace misodelay
