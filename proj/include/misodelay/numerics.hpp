#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace misodelay {

/// Natural log of a probability, kept so tails down to ~1e-300 and beyond stay finite.
struct LogProb {
  double log_value = 0.0;

  double value() const;
  static LogProb from_probability(double p);
};

/// Q(x), the standard Gaussian upper tail.
double gaussian_tail(double x);

/// ln Q(x). Uses a Mills-ratio continued fraction for x > 8.
LogProb log_gaussian_tail(double x);

/// ln(Q(x)/φ(x)), the log Mills ratio. Stays accurate where Q(x) itself underflows.
double log_mills_ratio(double x);

/// Upper incomplete gamma Γ(s, x). Any real s is accepted for x > 0; x = 0 needs s > 0.
double upper_incomplete_gamma(double s, double x);

/// ln Γ(s, x), finite even where Γ(s, x) itself over- or underflows.
double log_upper_incomplete_gamma(double s, double x);

/// Density of a chi-square variable with 2m degrees of freedom scaled by 1/2 (a Gamma(m, 1) law).
double chi2_scaled_pdf(int m, double xi);

/// Deterministic random stream. Streams derived from the same (seed, stream id) pair produce
/// identical sequences; distinct ids give statistically independent sequences.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Independent child stream keyed by `stream`, reproducible from this stream's seed.
  Rng substream(std::uint64_t stream) const;

  double uniform();
  double normal();
  /// Circularly symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance);
  double gamma(double shape);
  bool bernoulli(double p);

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// One draw of the scaled chi-square law with mean m and variance m.
double chi2_scaled_sample(int m, Rng& rng);

}  // namespace misodelay
