#include <doctest.h>

#include "misodelay/config.hpp"
#include "misodelay/error.hpp"

using namespace misodelay;

namespace {

SystemParams imperfect_params() {
  SystemParams p;
  p.n_antennas = 8;
  p.n_slot_symbols = 400;
  p.n_ul_train = 10;
  p.n_dl_train = 10;
  p.p_uplink = 31.62;
  p.csi_mode = CsiMode::ImperfectCsi;
  return p;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::ConfigError;
}

}  // namespace

TEST_CASE("derive_budget subtracts per-user training overhead") {
  const auto p = imperfect_params();
  CHECK(derive_budget(p, 5).n_data == 300);
  CHECK(derive_budget(p, 1).n_data == 380);
  const auto b = derive_budget(p, 5);
  CHECK(b.m == 4);
  CHECK(b.p_per_user * b.k_sched == doctest::Approx(p.p_total));
  CHECK(b.sigma_e_sq == doctest::Approx(1.0 / (1.0 + 316.2)).epsilon(1e-12));
  CHECK(b.sigma_e_sq == doctest::Approx(3.158e-3).epsilon(1e-3));
}

TEST_CASE("derive_budget in ideal mode keeps the whole slot") {
  SystemParams p;
  p.csi_mode = CsiMode::Ideal;
  const auto b = derive_budget(p, 6);
  CHECK(b.n_data == 400);
  CHECK(b.sigma_e_sq == 0.0);
  CHECK(b.m == 3);
}

TEST_CASE("derive_budget errors") {
  auto p = imperfect_params();
  CHECK(code_of([&] { derive_budget(p, 9); }) == Errc::KExceedsAntennas);
  p.n_antennas = 30;
  CHECK(code_of([&] { derive_budget(p, 20); }) == Errc::TrainingOverheadExceedsSlot);
}

TEST_CASE("n_data strictly decreases in K under imperfect CSI") {
  auto p = imperfect_params();
  p.n_antennas = 19;
  for (int k = 2; k <= 19; ++k) CHECK(derive_budget(p, k).n_data < derive_budget(p, k - 1).n_data);
}

TEST_CASE("superframe_partition integer and mixed cases") {
  auto g = superframe_partition(120, 40, 8);
  CHECK(g.k_a == 3);
  CHECK(g.k_b == 3);
  CHECK(g.degenerate());
  CHECK(g.p_a.value() == 1.0);

  g = superframe_partition(120, 36, 8);
  CHECK(g.k_a == 4);
  CHECK(g.k_b == 3);
  CHECK(g.t_a == 12);
  CHECK(g.t_b == 24);
  CHECK(g.p_a.value() == doctest::Approx(0.4));
  CHECK(g.p_b.value() == doctest::Approx(0.6));

  g = superframe_partition(121, 40, 8);
  CHECK(g.k_a == 4);
  CHECK(g.k_b == 3);
  CHECK(g.t_a == 1);
  CHECK(g.t_b == 39);

  CHECK(code_of([] { superframe_partition(120, 14, 8); }) == Errc::InfeasibleSchedule);
}

TEST_CASE("superframe_partition invariants hold exactly") {
  for (int k_tot = 1; k_tot <= 150; ++k_tot) {
    for (int t = 1; t <= k_tot; ++t) {
      const int k_ceil = (k_tot + t - 1) / t;
      if (k_ceil > 10) continue;
      const auto g = superframe_partition(k_tot, t, 10);
      REQUIRE(g.t_a * g.k_a + g.t_b * g.k_b == k_tot);
      REQUIRE(g.t_a + g.t_b == t);
      REQUIRE(g.p_a.num * g.p_b.den + g.p_b.num * g.p_a.den == g.p_a.den * g.p_b.den);
    }
  }
}

TEST_CASE("deadline_partition") {
  auto d = deadline_partition(120, 40);
  CHECK(d.p_group2.value() == 0.0);
  CHECK(d.n_frames_hi == 3);
  CHECK(d.n_frames_lo == 3);

  d = deadline_partition(120, 36);
  CHECK(d.p_group2.value() == doctest::Approx(1.0 / 3.0));
  CHECK(d.p_group1.value() == doctest::Approx(2.0 / 3.0));
  CHECK(d.n_frames_hi == 4);
  CHECK(d.n_frames_lo == 3);

  CHECK(code_of([] { deadline_partition(30, 40); }) == Errc::DeadlineShorterThanSuperframe);
}
