#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "misodelay/config.hpp"
#include "misodelay/numerics.hpp"

namespace misodelay {

/// Estimated channel of the K scheduled users and the zero-forcing beamformers built from it.
/// User 1 (column 0) is the user under observation.
struct ChannelEstimate {
  Eigen::MatrixXcd h_hat;        // N_t x K
  Eigen::MatrixXcd beamformers;  // N_t x K, unit-norm columns
  double mu = 0.0;               // ρ |ĥ₁ᴴ v₁|²
};

struct SinrSample {
  double sinr = 0.0;
  double sig_power = 0.0;
  double interference = 0.0;
};

struct EstimateOptions {
  /// Ĥ entries have variance 1 - σ_e² so that ĥ + e has unit variance. With false the estimate
  /// keeps unit variance (the unshrunk law).
  bool shrink = true;
  double max_condition = 1e12;
  std::uint64_t max_attempts = 10'000'000;
};

ChannelEstimate sample_estimate(const DerivedBudget& budget, int n_antennas, Rng& rng,
                                const EstimateOptions& opts = {});

/// One realization of the SINR of user 1 given the estimate, with a fresh estimation error.
SinrSample sample_sinr(const ChannelEstimate& est, const DerivedBudget& budget, Rng& rng);

/// Draws estimates until log2(1 + μ) lies within tol_bits of target_cap_bits.
ChannelEstimate conditioned_estimate(const DerivedBudget& budget, int n_antennas, double target_cap_bits,
                                     double tol_bits, Rng& rng, const EstimateOptions& opts = {});

double empirical_outage(const ChannelEstimate& est, const DerivedBudget& budget, double rate,
                        std::uint64_t n_draws, Rng& rng);

/// Average of Q((log2(1+SINR) - r) / sqrt(V_iid(SINR)/n_d)) over SINR draws.
double empirical_fbl_error(const ChannelEstimate& est, const DerivedBudget& budget, double rate,
                           std::uint64_t n_draws, Rng& rng);

/// Q((log2(1+sinr) - rate) / sqrt(V_iid(sinr)/n_data)) for one realized SINR.
double fbl_error_at_sinr(double sinr, double rate, double n_data);

/// Both estimators for all `rates` from one shared set of SINR draws. With `with_fbl` false the
/// fbl_error vector is left empty.
struct EmpiricalCurves {
  std::vector<double> outage;
  std::vector<double> fbl_error;
};

EmpiricalCurves empirical_curves(const ChannelEstimate& est, const DerivedBudget& budget,
                                 std::span<const double> rates, std::uint64_t n_draws, Rng& rng,
                                 bool with_fbl = true);

/// Estimates discarded because the pseudo-inverse was too ill-conditioned (process-wide).
std::uint64_t singular_resample_count();

}  // namespace misodelay
