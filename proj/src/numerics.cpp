#include "misodelay/numerics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "misodelay/error.hpp"

namespace misodelay {
namespace {

constexpr double kEulerGamma = 0.57721566490153286061;
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

// zeta(k) for k = 2..kZetaTerms+1, used by the small-argument Gamma expansion.
constexpr int kZetaTerms = 64;
const std::array<double, kZetaTerms>& zeta_table() {
  static const auto table = [] {
    std::array<double, kZetaTerms> t{};
    for (int k = 0; k < kZetaTerms; ++k) t[k] = std::riemann_zeta(static_cast<double>(k + 2));
    return t;
  }();
  return table;
}

// (Γ(1+a) - 1)/a for -0.5 <= a < 1, without the cancellation of the naive form near a = 0.
double gamma1pm1_over_a(double a) {
  if (a >= 0.5) return std::expm1(std::lgamma(1.0 + a)) / a;
  // ln Γ(1+a) = -γa + Σ_{k>=2} (-1)^k ζ(k) a^k / k
  const auto& zeta = zeta_table();
  double log_over_a = -kEulerGamma;
  double a_pow = a;
  for (int k = 2; k < kZetaTerms + 2; ++k) {
    const double term = zeta[k - 2] * a_pow / k;
    log_over_a += (k % 2 == 0) ? term : -term;
    if (std::abs(term) < kEps * std::abs(log_over_a)) break;
    a_pow *= a;
  }
  const double log_g = a * log_over_a;
  if (log_g == 0.0) return log_over_a;
  return std::expm1(log_g) / log_g * log_over_a;
}

// Scaled function g(a, x) = Γ(a, x) x^{-a} e^{x} by Legendre's continued fraction (modified Lentz).
double scaled_gamma_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 200000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error(Errc::DomainError, "incomplete gamma continued fraction did not converge");
}

// Scaled g(a0, x) for -0.5 <= a0 < 1 and 0 < x < 1, from
// Γ(a,x) = (Γ(1+a) - 1)/a - (x^a - 1)/a - Σ_{n>=1} (-1)^n x^{a+n} / (n! (a+n)).
double scaled_gamma_small(double a0, double x) {
  const double lx = std::log(x);
  const double head = gamma1pm1_over_a(a0) - (a0 == 0.0 ? lx : std::expm1(a0 * lx) / a0);
  double sum = 0.0;
  double term = 1.0;  // (-1)^n x^n / n!
  for (int n = 1; n < 200; ++n) {
    term *= -x / n;
    const double add = term / (a0 + n);
    sum += add;
    if (std::abs(add) < kEps * std::abs(sum)) break;
  }
  const double full = head - std::exp(a0 * lx) * sum;
  return full * std::exp(x - a0 * lx);
}

// ln Γ(a, x) through the lower-series for a >= 1 and x < a + 1.
double log_gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 1; n < 100000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < kEps * std::abs(sum)) break;
  }
  const double lower_ratio = sum * std::exp(a * std::log(x) - x - std::lgamma(a));
  return std::lgamma(a) + std::log1p(-lower_ratio);
}

}  // namespace

double LogProb::value() const { return std::exp(log_value); }

LogProb LogProb::from_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::DomainError, "probability outside [0,1]");
  return LogProb{std::log(p)};
}

double gaussian_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

LogProb log_gaussian_tail(double x) {
  if (x < -8.0) return LogProb{std::log1p(-gaussian_tail(-x))};
  if (x <= 8.0) return LogProb{std::log(gaussian_tail(x))};
  // Mills ratio Q(x)/φ(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
  double t = x;
  for (int k = 120; k >= 1; --k) t = x + k / t;
  const double log_phi = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
  return LogProb{log_phi - std::log(t)};
}

double log_mills_ratio(double x) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  if (x <= 8.0) return log_gaussian_tail(x).log_value + 0.5 * x * x + half_log_2pi;
  double t = x;
  for (int k = 120; k >= 1; --k) t = x + k / t;
  return -std::log(t);
}

double log_upper_incomplete_gamma(double s, double x) {
  if (!std::isfinite(s) || !(x >= 0.0)) throw Error(Errc::DomainError, "Γ(s,x) needs finite s and x >= 0");
  if (x == 0.0) {
    if (s <= 0.0) throw Error(Errc::DomainError, "Γ(s,0) diverges for s <= 0");
    return std::lgamma(s);
  }
  if (std::isinf(x)) return -std::numeric_limits<double>::infinity();
  const double lx = std::log(x);
  if (s >= 1.0) {
    if (x < s + 1.0) return log_gamma_series(s, x);
    return std::log(scaled_gamma_cf(s, x)) + s * lx - x;
  }
  if (x >= 1.0) return std::log(scaled_gamma_cf(s, x)) + s * lx - x;

  // s < 1, x < 1: start from a0 in [-0.5, 1) and walk down with g(a) = (x g(a+1) - 1) / a,
  // so no step divides by a value smaller than 0.5 in magnitude.
  double a = s >= 0.5 ? s : s + std::ceil(-s - 0.5);
  double g = scaled_gamma_small(a, x);
  while (a - s > 0.5) {
    a -= 1.0;
    g = (x * g - 1.0) / a;
  }
  return std::log(g) + s * lx - x;
}

double upper_incomplete_gamma(double s, double x) { return std::exp(log_upper_incomplete_gamma(s, x)); }

double chi2_scaled_pdf(int m, double xi) {
  if (m < 1) throw Error(Errc::DomainError, "chi2_scaled_pdf needs m >= 1");
  if (xi < 0.0) return 0.0;
  if (xi == 0.0) return m == 1 ? 1.0 : 0.0;
  return std::exp((m - 1) * std::log(xi) - xi - std::lgamma(static_cast<double>(m)));
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))), engine_(seed_) {}

Rng Rng::substream(std::uint64_t stream) const { return Rng(seed_, stream); }

double Rng::uniform() { return uniform_(engine_); }

double Rng::normal() { return normal_(engine_); }

std::complex<double> Rng::complex_normal(double variance) {
  const double scale = std::sqrt(0.5 * variance);
  const double re = normal_(engine_);
  const double im = normal_(engine_);
  return {scale * re, scale * im};
}

double Rng::gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }

bool Rng::bernoulli(double p) { return uniform_(engine_) < p; }

double chi2_scaled_sample(int m, Rng& rng) {
  if (m < 1) throw Error(Errc::DomainError, "chi2_scaled_sample needs m >= 1");
  return rng.gamma(static_cast<double>(m));
}

}  // namespace misodelay
