#include <doctest.h>

#include <cmath>
#include <vector>

#include "misodelay/config.hpp"
#include "misodelay/error.hpp"
#include "misodelay/outage_bounds.hpp"
#include "misodelay/phy_mc.hpp"

using namespace misodelay;

namespace {

SystemParams base(CsiMode mode, double p_ul_db = 15.0) {
  SystemParams p;
  p.n_antennas = 8;
  p.p_total = 100.0;
  p.p_uplink = db_to_linear(p_ul_db);
  p.csi_mode = mode;
  return p;
}

}  // namespace

TEST_CASE("estimate structure") {
  const auto b = derive_budget(base(CsiMode::ImperfectCsi), 5);
  Rng rng(11);
  double worst_zf = 0.0, worst_norm = 0.0;
  for (int d = 0; d < 10000; ++d) {
    const auto est = sample_estimate(b, 8, rng);
    const Eigen::MatrixXcd g = est.h_hat.adjoint() * est.beamformers;
    for (int j = 0; j < 5; ++j) {
      worst_norm = std::max(worst_norm, std::abs(est.beamformers.col(j).norm() - 1.0));
      for (int k = 0; k < 5; ++k)
        if (j != k) worst_zf = std::max(worst_zf, std::abs(g(j, k)));
    }
    CHECK(est.mu == doctest::Approx(b.p_per_user * std::norm(g(0, 0))).epsilon(1e-12));
  }
  CHECK(worst_zf < 1e-10);
  CHECK(worst_norm < 1e-12);
  CHECK_THROWS_AS(sample_estimate(derive_budget(base(CsiMode::Ideal), 9 - 1), 4, rng), Error);
}

TEST_CASE("estimated SNR follows the scaled chi-square law") {
  Rng rng(3);
  const int n = 100000;
  SUBCASE("K = 1") {
    const auto b = derive_budget(base(CsiMode::Ideal), 1);
    double sum = 0.0;
    for (int d = 0; d < n; ++d) sum += sample_estimate(b, 8, rng).mu / b.p_per_user;
    CHECK(sum / n == doctest::Approx(8.0).epsilon(0.01));
  }
  SUBCASE("K = 5") {
    const auto b = derive_budget(base(CsiMode::Ideal), 5);
    double sum = 0.0;
    for (int d = 0; d < n; ++d) sum += sample_estimate(b, 8, rng).mu / b.p_per_user;
    CHECK(sum / n == doctest::Approx(4.0).epsilon(0.01));
  }
  SUBCASE("shrinkage switch") {
    const auto b = derive_budget(base(CsiMode::ImperfectCsi, 0.0), 5);  // σ_e² = 1/11
    double shrunk = 0.0, plain = 0.0;
    EstimateOptions unshrunk;
    unshrunk.shrink = false;
    for (int d = 0; d < n; ++d) {
      shrunk += sample_estimate(b, 8, rng).mu / b.p_per_user;
      plain += sample_estimate(b, 8, rng, unshrunk).mu / b.p_per_user;
    }
    CHECK(shrunk / n == doctest::Approx(4.0 * (1.0 - b.sigma_e_sq)).epsilon(0.01));
    CHECK(plain / n == doctest::Approx(4.0).epsilon(0.01));
  }
}

TEST_CASE("SINR samples") {
  Rng rng(5);
  SUBCASE("perfect CSI gives the estimate") {
    const auto b = derive_budget(base(CsiMode::Ideal), 5);
    const auto est = sample_estimate(b, 8, rng);
    for (int d = 0; d < 10; ++d) {
      const auto s = sample_sinr(est, b, rng);
      CHECK(s.sinr == est.mu);
      CHECK(s.interference == 0.0);
    }
  }
  SUBCASE("single user has no interference") {
    const auto b = derive_budget(base(CsiMode::ImperfectCsi), 1);
    const auto est = sample_estimate(b, 8, rng);
    for (int d = 0; d < 100; ++d) CHECK(sample_sinr(est, b, rng).interference == 0.0);
  }
  SUBCASE("mean interference") {
    const auto b = derive_budget(base(CsiMode::ImperfectCsi), 5);
    const auto est = sample_estimate(b, 8, rng);
    for (int d = 0; d < 100; ++d) {
      const auto s = sample_sinr(est, b, rng);
      CHECK(s.sinr == doctest::Approx(s.sig_power / (1.0 + s.interference)).epsilon(1e-14));
    }
    const int n = 1000000;
    double sum = 0.0;
    for (int d = 0; d < n; ++d) sum += sample_sinr(est, b, rng).interference;
    CHECK(sum / n == doctest::Approx(4.0 * b.p_per_user * b.sigma_e_sq).epsilon(0.01));
  }
}

TEST_CASE("conditioned estimates") {
  Rng rng(9);
  const auto b5 = derive_budget(base(CsiMode::ImperfectCsi), 5);
  const auto est = conditioned_estimate(b5, 8, 6.0, 0.01, rng);
  CHECK(std::abs(std::log2(1.0 + est.mu) - 6.0) <= 0.01);
  const auto b2 = derive_budget(base(CsiMode::ImperfectCsi), 2);
  const auto est2 = conditioned_estimate(b2, 8, 8.0, 0.01, rng);
  CHECK(std::abs(std::log2(1.0 + est2.mu) - 8.0) <= 0.01);
  EstimateOptions small;
  small.max_attempts = 1000;
  CHECK_THROWS_AS(conditioned_estimate(b5, 8, 6.0, 0.0, rng, small), Error);
  try {
    conditioned_estimate(b5, 8, 6.0, 0.0, rng, small);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::RejectionBudgetExhausted);
  }
}

TEST_CASE("empirical outage") {
  Rng rng(13);
  const auto b = derive_budget(base(CsiMode::ImperfectCsi), 5);
  const auto est = conditioned_estimate(b, 8, 6.0, 0.01, rng);
  CHECK(empirical_outage(est, b, 0.0, 1000, rng) == 0.0);
  CHECK(empirical_outage(est, b, 60.0, 1000, rng) == 1.0);
  CHECK_THROWS_AS(empirical_outage(est, b, 1.0, 0, rng), Error);

  std::vector<double> rates;
  for (int i = 0; i <= 60; ++i) rates.push_back(0.1 * i);
  Rng a(21), c(21);
  const auto curves = empirical_curves(est, b, rates, 20000, a);
  for (std::size_t i = 1; i < rates.size(); ++i) CHECK(curves.outage[i] >= curves.outage[i - 1]);
  // the shared-draw curve equals the pointwise estimator on the same stream
  CHECK(curves.outage[48] == empirical_outage(est, b, rates[48], 20000, c));
  Rng f(21);
  CHECK(curves.fbl_error[48] == doctest::Approx(empirical_fbl_error(est, b, rates[48], 20000, f)).epsilon(1e-12));

  // unordered rates map back to their positions
  const std::vector<double> shuffled{5.0, 4.0, 4.5};
  Rng g(21);
  const auto sc = empirical_curves(est, b, shuffled, 20000, g, false);
  CHECK(sc.fbl_error.empty());
  CHECK(sc.outage[0] == curves.outage[50]);
  CHECK(sc.outage[1] == curves.outage[40]);
}

TEST_CASE("perfect CSI single user outage is an indicator") {
  Rng rng(17);
  const auto b = derive_budget(base(CsiMode::Ideal), 1);
  for (int d = 0; d < 50; ++d) {
    const auto est = sample_estimate(b, 8, rng);
    const double cap = std::log2(1.0 + est.mu);
    CHECK(empirical_outage(est, b, cap - 1e-9, 10, rng) == 0.0);
    CHECK(empirical_outage(est, b, cap + 1e-9, 10, rng) == 1.0);
  }
}

TEST_CASE("blocklength error approaches outage for long codes") {
  Rng rng(19);
  auto b = derive_budget(base(CsiMode::ImperfectCsi), 5);
  const auto est = conditioned_estimate(b, 8, 6.0, 0.01, rng);
  b.n_data = 1000000000;
  Rng a(4), c(4);
  const double out = empirical_outage(est, b, 5.0, 200000, a);
  const double fbl = empirical_fbl_error(est, b, 5.0, 200000, c);
  CHECK(std::abs(out - fbl) < 3.0 * std::sqrt(out * (1.0 - out) / 200000.0) + 1e-4);
  Rng z(4);
  CHECK(empirical_fbl_error(est, b, 0.0, 1000, z) < 1e-12);
}

TEST_CASE("MC runs are reproducible") {
  const auto b = derive_budget(base(CsiMode::ImperfectCsi), 5);
  Rng a(99), c(99);
  const auto e1 = conditioned_estimate(b, 8, 6.0, 0.01, a);
  const auto e2 = conditioned_estimate(b, 8, 6.0, 0.01, c);
  CHECK(e1.mu == e2.mu);
  CHECK(empirical_outage(e1, b, 5.0, 5000, a) == empirical_outage(e2, b, 5.0, 5000, c));
}
