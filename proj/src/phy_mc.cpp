#include "misodelay/phy_mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "misodelay/error.hpp"
#include "misodelay/outage_bounds.hpp"

namespace misodelay {
namespace {

std::atomic<std::uint64_t> g_singular{0};

// Precomputed pieces of the SINR of user 1 for a fixed estimate.
struct SinrKernel {
  int n_antennas;
  int k;
  std::complex<double> g_hat;  // ĥ₁ᴴ v₁
  Eigen::MatrixXcd v;          // beamformers
  Eigen::VectorXcd e;
  double rho;
  double err_var;

  SinrKernel(const ChannelEstimate& est, const DerivedBudget& budget)
      : n_antennas(static_cast<int>(est.h_hat.rows())),
        k(static_cast<int>(est.h_hat.cols())),
        g_hat(est.h_hat.col(0).dot(est.beamformers.col(0))),
        v(est.beamformers),
        e(n_antennas),
        rho(budget.p_per_user),
        err_var(budget.sigma_e_sq) {}

  SinrSample draw(Rng& rng) {
    if (err_var <= 0.0) {
      const double g = rho * std::norm(g_hat);
      return {g, g, 0.0};
    }
    for (int i = 0; i < n_antennas; ++i) e[i] = rng.complex_normal(err_var);
    // eᴴ v_j for every beam in one product
    const Eigen::VectorXcd proj = v.adjoint() * e;
    const double g = rho * std::norm(g_hat + std::conj(proj[0]));
    double interference = 0.0;
    for (int j = 1; j < k; ++j) interference += std::norm(proj[j]);
    interference *= rho;
    return {g / (1.0 + interference), g, interference};
  }
};

}  // namespace

double fbl_error_at_sinr(double sinr, double rate, double n_data) {
  const double cap = std::log2(1.0 + sinr);
  const double disp = dispersion_iid(sinr);
  if (disp <= 0.0) return cap < rate ? 1.0 : 0.0;
  return gaussian_tail((cap - rate) / std::sqrt(disp / n_data));
}

ChannelEstimate sample_estimate(const DerivedBudget& budget, int n_antennas, Rng& rng, const EstimateOptions& opts) {
  const int k = budget.k_sched;
  if (k < 1 || k > n_antennas) throw Error(Errc::KExceedsAntennas, "K must lie in [1, N_t]");
  const double var = opts.shrink ? 1.0 - budget.sigma_e_sq : 1.0;
  ChannelEstimate est;
  est.h_hat.resize(n_antennas, k);
  for (std::uint64_t attempt = 0; attempt < opts.max_attempts; ++attempt) {
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < n_antennas; ++i) est.h_hat(i, j) = rng.complex_normal(var);
    // V ∝ pinv(Ĥᴴ) so that Ĥᴴ V is diagonal.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(est.h_hat.adjoint());
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(est.h_hat);
    const auto& sv = svd.singularValues();
    if (cod.rank() < k || sv(0) > opts.max_condition * sv(k - 1)) {
      g_singular.fetch_add(1, std::memory_order_relaxed);
      continue;
    }
    est.beamformers = cod.pseudoInverse();
    est.beamformers.colwise().normalize();
    est.mu = budget.p_per_user * std::norm(est.h_hat.col(0).dot(est.beamformers.col(0)));
    return est;
  }
  throw Error(Errc::SingularEstimate, "no well-conditioned estimate within the attempt budget");
}

SinrSample sample_sinr(const ChannelEstimate& est, const DerivedBudget& budget, Rng& rng) {
  SinrKernel kernel(est, budget);
  return kernel.draw(rng);
}

ChannelEstimate conditioned_estimate(const DerivedBudget& budget, int n_antennas, double target_cap_bits,
                                     double tol_bits, Rng& rng, const EstimateOptions& opts) {
  if (tol_bits > 0.0) {
    for (std::uint64_t attempt = 0; attempt < opts.max_attempts; ++attempt) {
      EstimateOptions single = opts;
      single.max_attempts = 1000;
      auto est = sample_estimate(budget, n_antennas, rng, single);
      if (std::abs(std::log2(1.0 + est.mu) - target_cap_bits) <= tol_bits) return est;
    }
  }
  throw Error(Errc::RejectionBudgetExhausted, "no estimate hit the capacity window");
}

EmpiricalCurves empirical_curves(const ChannelEstimate& est, const DerivedBudget& budget,
                                 std::span<const double> rates, std::uint64_t n_draws, Rng& rng,
                                 bool with_fbl) {
  if (n_draws < 1) throw Error(Errc::InvalidParameter, "n_draws must be >= 1");
  const std::size_t nr = rates.size();
  // rates are sorted once so every draw touches only the outage counts it affects
  std::vector<std::size_t> order(nr);
  for (std::size_t i = 0; i < nr; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rates[a] < rates[b]; });
  std::vector<double> sorted(nr);
  for (std::size_t i = 0; i < nr; ++i) sorted[i] = rates[order[i]];

  std::vector<std::uint64_t> below(nr + 1, 0);  // histogram of first rate exceeding capacity
  std::vector<double> fbl_sum(nr, 0.0);
  const double n_data = static_cast<double>(budget.n_data);
  SinrKernel kernel(est, budget);
  for (std::uint64_t d = 0; d < n_draws; ++d) {
    const double sinr = kernel.draw(rng).sinr;
    const double cap = std::log2(1.0 + sinr);
    // outage at rate r iff cap < r
    const auto first = std::upper_bound(sorted.begin(), sorted.end(), cap) - sorted.begin();
    ++below[static_cast<std::size_t>(first)];
    if (!with_fbl) continue;
    const double disp = dispersion_iid(sinr);
    const double scale = disp > 0.0 ? std::sqrt(n_data / disp) : 0.0;
    for (std::size_t i = 0; i < nr; ++i) {
      if (scale == 0.0) fbl_sum[i] += cap < sorted[i] ? 1.0 : 0.0;
      else fbl_sum[i] += gaussian_tail((cap - sorted[i]) * scale);
    }
  }
  EmpiricalCurves out;
  out.outage.assign(nr, 0.0);
  if (with_fbl) out.fbl_error.assign(nr, 0.0);
  std::uint64_t cum = 0;
  for (std::size_t i = 0; i < nr; ++i) {
    cum += below[i];
    out.outage[order[i]] = static_cast<double>(cum) / static_cast<double>(n_draws);
    if (with_fbl) out.fbl_error[order[i]] = fbl_sum[i] / static_cast<double>(n_draws);
  }
  return out;
}

double empirical_outage(const ChannelEstimate& est, const DerivedBudget& budget, double rate,
                        std::uint64_t n_draws, Rng& rng) {
  if (n_draws < 1) throw Error(Errc::InvalidParameter, "n_draws must be >= 1");
  SinrKernel kernel(est, budget);
  std::uint64_t hits = 0;
  for (std::uint64_t d = 0; d < n_draws; ++d) {
    if (std::log2(1.0 + kernel.draw(rng).sinr) < rate) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_draws);
}

double empirical_fbl_error(const ChannelEstimate& est, const DerivedBudget& budget, double rate,
                           std::uint64_t n_draws, Rng& rng) {
  if (n_draws < 1) throw Error(Errc::InvalidParameter, "n_draws must be >= 1");
  SinrKernel kernel(est, budget);
  double sum = 0.0;
  for (std::uint64_t d = 0; d < n_draws; ++d) sum += fbl_error_at_sinr(kernel.draw(rng).sinr, rate, budget.n_data);
  return sum / static_cast<double>(n_draws);
}

std::uint64_t singular_resample_count() { return g_singular.load(std::memory_order_relaxed); }

}  // namespace misodelay
