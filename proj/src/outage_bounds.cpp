#include "misodelay/outage_bounds.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "misodelay/error.hpp"
#include "misodelay/numerics.hpp"

namespace misodelay {
namespace {

constexpr double kLog2eSq = std::numbers::log2e * std::numbers::log2e;

std::atomic<std::uint64_t> g_clamp_events{0};

double clamp_probability(double p) {
  if (p > 1.0) {
    g_clamp_events.fetch_add(1, std::memory_order_relaxed);
    return 1.0;
  }
  if (!(p >= 0.0)) {
    g_clamp_events.fetch_add(1, std::memory_order_relaxed);
    return 0.0;
  }
  return p;
}

double threshold_snr(double rate) {
  if (!(rate > 0.0)) throw Error(Errc::NonPositiveRate, "rate must be > 0");
  return std::expm1(rate * std::numbers::ln2);
}

// Hh_n(z) = ∫_z^∞ (t-z)^n/n! e^{-t²/2} dt for n = 0..count-1. For z > 0 the values are returned
// times e^{z²/2}.
// Forward recurrence n Hh_n = Hh_{n-2} - z Hh_{n-1} is fine for small z; for larger z the wanted
// solution is recessive (the other one grows like e^{2z√n} relative to it) and is obtained by
// backward recurrence normalized with Hh_0.
std::vector<double> scaled_hh(int count, double z) {
  std::vector<double> h(static_cast<std::size_t>(count));
  const double sqrt2pi = std::sqrt(2.0 * std::numbers::pi);
  if (z < 1.0) {
    double prev = z > 0.0 ? 1.0 : std::exp(-0.5 * z * z);  // Hh_{-1}
    double cur = z > 0.0 ? std::exp(log_mills_ratio(z)) : sqrt2pi * gaussian_tail(z);
    h[0] = cur;
    for (int n = 1; n < count; ++n) {
      const double next = (prev - z * cur) / n;
      prev = cur;
      cur = next;
      h[n] = cur;
    }
    return h;
  }
  h[0] = std::exp(log_mills_ratio(z));
  if (count == 1) return h;
  const double root_start = std::sqrt(static_cast<double>(count)) + 20.0 / z;
  const int start = static_cast<int>(root_start * root_start) + 10;
  std::vector<double> y(static_cast<std::size_t>(start + 2), 0.0);
  y[start] = 1e-200;
  for (int n = start + 1; n >= 2; --n) {
    y[n - 2] = n * y[n] + z * y[n - 1];
    if (y[n - 2] > 1e200) {
      for (int k = n - 2; k <= start; ++k) y[k] *= 1e-200;
    }
  }
  const double norm = h[0] / y[0];
  for (int n = 1; n < count; ++n) h[n] = y[n] * norm;
  return h;
}

// P(G / (1 + I) < γ₀) with G ~ N(μ, σ²) and I ~ Gamma(ν, λ):
// Q((μ-γ₀)/σ) + e^A Σ_{m<ν} Σ_{l<=m} C(m,l) (μ̃-γ₀)^{m-l} / ((λγ₀)^m m!) B_l(γ₀-μ̃)
// with A = 1/λ - μ/(λγ₀) + σ²/(2(λγ₀)²) and μ̃ = μ - σ²/(λγ₀).
// The inner sum equals ∫_x^∞ (t-x)^m φ_σ(t) dt = m! σ^m Hh_m(x/σ)/√(2π), x = γ₀ - μ̃, which avoids
// the alternating cancellation of the binomial form.
double gaussian_gamma_outage(double mu, double sigma_sq, int nu, double scale, double gamma0) {
  if (sigma_sq <= 0.0) {
    // Deterministic signal power.
    if (mu <= gamma0) return 1.0;
    if (nu == 0 || scale <= 0.0) return 0.0;
    const double threshold = (mu / gamma0 - 1.0) / scale;
    return clamp_probability(
        std::exp(log_upper_incomplete_gamma(nu, threshold) - std::lgamma(static_cast<double>(nu))));
  }
  const double sigma = std::sqrt(sigma_sq);
  const double signal_term = gaussian_tail((mu - gamma0) / sigma);
  if (nu == 0 || scale <= 0.0) return clamp_probability(signal_term);

  const double lg = scale * gamma0;
  const double x = gamma0 - mu + sigma_sq / lg;
  const auto hh = scaled_hh(nu, x / sigma);

  // For x > 0: e^A e^{-x²/2σ²} = e^{-(γ₀-μ)²/2σ²}, finite as γ₀ → 0.
  const double log_prefactor = x > 0.0 ? -(gamma0 - mu) * (gamma0 - mu) / (2.0 * sigma_sq)
                                       : 1.0 / scale - mu / lg + sigma_sq / (2.0 * lg * lg);
  const double ratio = sigma / lg;
  double total = 0.0;
  double power = 1.0;
  for (int m = 0; m < nu; ++m) {
    total += power * hh[m];
    power *= ratio;
  }
  const double interference_term = std::exp(log_prefactor + std::log(total) - 0.5 * std::log(2.0 * std::numbers::pi));
  return clamp_probability(signal_term + interference_term);
}

}  // namespace

EstimateStats make_estimate_stats(const DerivedBudget& budget, double mu, bool finite_blocklength) {
  if (!(mu >= 0.0)) throw Error(Errc::InvalidParameter, "mu must be >= 0");
  EstimateStats s;
  s.mu = mu;
  s.sigma_s_sq = 2.0 * budget.sigma_e_sq * budget.p_per_user * mu;
  s.nu = budget.k_sched - 1;
  s.lambda_u = budget.p_per_user * budget.sigma_e_sq;
  s.lambda_c = s.lambda_u * s.nu;
  s.n_data = finite_blocklength ? static_cast<double>(budget.n_data) : std::numeric_limits<double>::infinity();
  s.sigma_cf_sq = fbl_sigma(s);
  return s;
}

double dispersion_iid(double snr) { return 2.0 * snr / (1.0 + snr) * kLog2eSq; }

double dispersion_awgn(double snr) {
  const double inv = 1.0 / (1.0 + snr);
  return (1.0 - inv * inv) * kLog2eSq;
}

double b_integral(int l, double x, double sigma_sq) {
  if (l < 0 || !(sigma_sq > 0.0)) throw Error(Errc::DomainError, "b_integral needs l >= 0 and sigma_sq > 0");
  const double root = std::sqrt(sigma_sq / (2.0 * std::numbers::pi));
  const double gauss = std::exp(-x * x / (2.0 * sigma_sq));
  double prev2 = gaussian_tail(x / std::sqrt(sigma_sq));  // B_0
  if (l == 0) return prev2;
  double prev1 = root * gauss;  // B_1
  for (int k = 2; k <= l; ++k) {
    const double next = root * std::pow(x, k - 1) * gauss + (k - 1) * sigma_sq * prev2;
    prev2 = prev1;
    prev1 = next;
  }
  return prev1;
}

double pout_lower(const EstimateStats& stats, double rate) {
  const double gamma0 = threshold_snr(rate);
  return gaussian_gamma_outage(stats.mu, stats.sigma_s_sq, stats.nu, stats.lambda_u, gamma0);
}

double pout_upper(const EstimateStats& stats, double rate) {
  const double gamma0 = threshold_snr(rate);
  if (stats.nu == 0) return gaussian_gamma_outage(stats.mu, stats.sigma_s_sq, 0, 0.0, gamma0);
  return gaussian_gamma_outage(stats.mu, stats.sigma_s_sq, 1, stats.lambda_c, gamma0);
}

double fbl_sigma(const EstimateStats& stats) {
  if (std::isinf(stats.n_data)) return stats.sigma_s_sq;
  if (!(stats.n_data >= 1.0)) throw Error(Errc::InvalidParameter, "n_data must be >= 1");
  const double spread = 1.0 + stats.lambda_c;
  const double scale = spread + stats.mu;
  return stats.sigma_s_sq + scale * scale * dispersion_iid(stats.mu / spread) / (stats.n_data * kLog2eSq);
}

double fbl_error_upper(const EstimateStats& stats, double rate) {
  const double gamma0 = threshold_snr(rate);
  if (stats.nu == 0) return gaussian_gamma_outage(stats.mu, stats.sigma_cf_sq, 0, 0.0, gamma0);
  return gaussian_gamma_outage(stats.mu, stats.sigma_cf_sq, 1, stats.lambda_c, gamma0);
}

double fbl_error_uncorrelated_nonbound(const EstimateStats& stats, double rate) {
  const double gamma0 = threshold_snr(rate);
  return gaussian_gamma_outage(stats.mu, stats.sigma_cf_sq, stats.nu, stats.lambda_u, gamma0);
}

std::string_view to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::UpperCorrelated: return "upper";
    case BoundKind::FblUpperCorrelated: return "fbl_upper";
    case BoundKind::LowerUncorrelated: return "lower";
  }
  return "unknown";
}

double error_probability(BoundKind kind, const EstimateStats& stats, double rate) {
  if (rate == 0.0) return 0.0;
  switch (kind) {
    case BoundKind::UpperCorrelated: return pout_upper(stats, rate);
    case BoundKind::FblUpperCorrelated: return fbl_error_upper(stats, rate);
    case BoundKind::LowerUncorrelated: return pout_lower(stats, rate);
  }
  return 1.0;
}

double rate_at_error(BoundKind kind, const EstimateStats& stats, double target, double r_hi) {
  if (!(target > 0.0 && target < 1.0)) throw Error(Errc::InvalidParameter, "target must lie in (0,1)");
  double lo = 0.0;
  double hi = r_hi;
  if (error_probability(kind, stats, hi) <= target) return hi;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (error_probability(kind, stats, mid) <= target) lo = mid;
    else hi = mid;
  }
  return lo;
}

std::uint64_t clamp_event_count() { return g_clamp_events.load(std::memory_order_relaxed); }

void reset_clamp_event_count() { g_clamp_events.store(0, std::memory_order_relaxed); }

}  // namespace misodelay
