#include <doctest.h>

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "misodelay/error.hpp"
#include "misodelay/numerics.hpp"

using namespace misodelay;
using boost::math::quadrature::gauss_kronrod;

namespace {

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

// Oracle: ∫_x^∞ t^{a-1} e^{-t} dt by adaptive Gauss-Kronrod.
double gamma_by_quadrature(double a, double x) {
  auto f = [a](double t) { return std::exp((a - 1.0) * std::log(t) - t); };
  return gauss_kronrod<double, 61>::integrate(f, x, std::numeric_limits<double>::infinity(), 25, 1e-14);
}

}  // namespace

TEST_CASE("gaussian_tail basics") {
  CHECK(gaussian_tail(0.0) == 0.5);
  CHECK(gaussian_tail(-40.0) == doctest::Approx(1.0).epsilon(1e-15));
  const double oracle = gauss_kronrod<double, 61>::integrate(
      [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }, 1.0,
      std::numeric_limits<double>::infinity(), 20, 1e-14);
  CHECK(rel_err(gaussian_tail(1.0), oracle) < 1e-12);
  CHECK(gaussian_tail(1.0) == doctest::Approx(0.15865525).epsilon(1e-8));
}

TEST_CASE("gaussian_tail symmetry and monotonicity") {
  double prev = 1.0;
  for (double x = -8.0; x <= 8.0; x += 0.01) {
    CHECK(std::abs(gaussian_tail(x) + gaussian_tail(-x) - 1.0) < 1e-14);
    // Below -5 neighbouring values round to the same double near 1.
    if (x > -5.0) CHECK(gaussian_tail(x) < prev);
    prev = gaussian_tail(x);
  }
}

TEST_CASE("log_gaussian_tail against a 50-digit oracle") {
  using big = boost::multiprecision::cpp_bin_float_50;
  CHECK(log_gaussian_tail(0.0).log_value == doctest::Approx(std::log(0.5)));
  for (double x : {8.5, 10.0, 15.0, 30.0, 60.0}) {
    const big q = boost::math::erfc(big(x) / sqrt(big(2))) / 2;
    const double want = static_cast<double>(log(q));
    CHECK(rel_err(log_gaussian_tail(x).log_value, want) < 1e-10);
  }
  CHECK(log_gaussian_tail(10.0).log_value == doctest::Approx(-53.23).epsilon(1e-3));
  for (double x = -8.0; x <= 8.0; x += 0.05) {
    CHECK(rel_err(log_gaussian_tail(x).value(), gaussian_tail(x)) < 1e-12);
  }
  CHECK(log_gaussian_tail(-12.0).log_value < 0.0);
  CHECK(log_gaussian_tail(-12.0).log_value > -1e-30);
}

TEST_CASE("upper_incomplete_gamma closed forms") {
  for (double x : {0.0, 0.01, 0.5, 1.0, 3.0, 20.0}) {
    CHECK(rel_err(upper_incomplete_gamma(1.0, x), std::exp(-x)) < 1e-13);
  }
  for (double s : {0.3, 1.0, 2.5, 7.0}) {
    CHECK(rel_err(upper_incomplete_gamma(s, 0.0), std::tgamma(s)) < 1e-13);
  }
  CHECK(rel_err(upper_incomplete_gamma(3.0, 2.0), 10.0 * std::exp(-2.0)) < 1e-13);
  CHECK(upper_incomplete_gamma(3.0, 2.0) == doctest::Approx(1.35335).epsilon(1e-5));
  // Finite series for integer s.
  for (int s = 1; s <= 12; ++s) {
    for (double x : {0.05, 0.7, 2.0, 9.0, 30.0}) {
      double sum = 0.0, term = 1.0;
      for (int k = 0; k < s; ++k) {
        if (k > 0) term *= x / k;
        sum += term;
      }
      const double want = std::tgamma(s) * std::exp(-x) * sum;
      CHECK(rel_err(upper_incomplete_gamma(s, x), want) < 1e-12);
    }
  }
}

TEST_CASE("upper_incomplete_gamma positive s against Boost") {
  for (double s : {0.01, 0.2, 0.5, 0.99, 1.5, 3.7, 8.0, 20.0, 45.5}) {
    for (double x : {1e-4, 0.01, 0.3, 0.99, 1.0, 1.7, 5.0, 25.0, 60.0}) {
      const double want = boost::math::tgamma(s, x);
      INFO("s=" << s << " x=" << x);
      CHECK(rel_err(upper_incomplete_gamma(s, x), want) < 1e-11);
    }
  }
}

TEST_CASE("upper_incomplete_gamma negative and integer s against quadrature") {
  for (double s : {-0.5, -1.0, -2.0, -3.3, -4.0, -7.9, 0.0, -1e-9, -2.0 + 1e-7}) {
    for (double x : {0.01, 0.1, 0.5, 1.0, 2.5, 10.0}) {
      INFO("s=" << s << " x=" << x);
      CHECK(rel_err(upper_incomplete_gamma(s, x), gamma_by_quadrature(s, x)) < 1e-10);
    }
  }
}

TEST_CASE("upper_incomplete_gamma recurrence identity") {
  for (double s = 0.5; s <= 20.0; s += 0.37) {
    for (double x : {0.01, 0.05, 0.3, 1.0, 2.2, 7.0, 15.0, 33.0, 50.0}) {
      const double lhs = upper_incomplete_gamma(s + 1.0, x);
      const double rhs = s * upper_incomplete_gamma(s, x) + std::exp(s * std::log(x) - x);
      INFO("s=" << s << " x=" << x);
      CHECK(rel_err(lhs, rhs) < 1e-10);
    }
  }
}

TEST_CASE("upper_incomplete_gamma is decreasing in x and finite in log for extreme s") {
  for (double s : {-30.5, -3.0, 0.5, 4.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double x = 0.01; x < 40.0; x *= 1.3) {
      const double v = log_upper_incomplete_gamma(s, x);
      CHECK(v < prev);
      prev = v;
    }
  }
  const double big = log_upper_incomplete_gamma(-570.0, 0.08);
  CHECK(std::isfinite(big));
  // Leading behaviour x^s e^{-x} / |s| for very negative s.
  CHECK(big == doctest::Approx(-570.0 * std::log(0.08) - 0.08 - std::log(570.0)).epsilon(1e-4));
}

TEST_CASE("upper_incomplete_gamma domain errors") {
  CHECK_THROWS_AS(upper_incomplete_gamma(0.0, 0.0), Error);
  CHECK_THROWS_AS(upper_incomplete_gamma(-1.5, 0.0), Error);
  CHECK_THROWS_AS(upper_incomplete_gamma(1.0, -1.0), Error);
}

TEST_CASE("chi2_scaled_pdf") {
  CHECK(chi2_scaled_pdf(1, 0.0) == 1.0);
  CHECK(chi2_scaled_pdf(1, 2.0) == doctest::Approx(std::exp(-2.0)));
  CHECK(chi2_scaled_pdf(2, 1.0) == doctest::Approx(0.36788).epsilon(1e-5));
  const double mass = gauss_kronrod<double, 61>::integrate([](double x) { return chi2_scaled_pdf(5, x); }, 0.0,
                                                           std::numeric_limits<double>::infinity(), 20, 1e-13);
  CHECK(std::abs(mass - 1.0) < 1e-10);
  for (int m = 2; m <= 9; ++m) {
    const double peak = chi2_scaled_pdf(m, m - 1.0);
    CHECK(peak > chi2_scaled_pdf(m, m - 1.0 - 1e-3));
    CHECK(peak > chi2_scaled_pdf(m, m - 1.0 + 1e-3));
  }
}

TEST_CASE("chi2_scaled_sample moments") {
  Rng rng(12345);
  const int n = 1'000'000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = chi2_scaled_sample(4, rng);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean - 4.0) < 0.01);
  CHECK(std::abs(var - 4.0) < 0.05);
}

TEST_CASE("chi2_scaled_sample with m=1 is a unit exponential (KS at 1e-3)") {
  Rng rng(99);
  const int n = 100'000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = chi2_scaled_sample(1, rng);
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = 1.0 - std::exp(-xs[i]);
    d = std::max({d, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
  }
  CHECK(d * std::sqrt(static_cast<double>(n)) < 1.95);
}

TEST_CASE("Rng streams are reproducible and distinct") {
  Rng a(7, 3), b(7, 3), c(7, 4);
  for (int i = 0; i < 100; ++i) {
    const double va = a.normal();
    CHECK(va == b.normal());
    CHECK(va != c.normal());
  }
  Rng parent(11);
  Rng s1 = parent.substream(5), s2 = parent.substream(5);
  CHECK(s1.uniform() == s2.uniform());
}
