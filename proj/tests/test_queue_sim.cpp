#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "misodelay/config.hpp"
#include "misodelay/error.hpp"
#include "misodelay/numerics.hpp"
#include "misodelay/queue_sim.hpp"
#include "misodelay/rate_adaptation.hpp"
#include "misodelay/service_model.hpp"

using namespace misodelay;

namespace {

struct Oracle {
  std::uint64_t measured = 0, violations = 0, max_delay = 0;
};

// Cumulative departures D and the definition W(t) = min{u : D(0,t+u) ≥ A(0,t)}, by brute force.
Oracle brute_force(const std::vector<double>& c, double alpha, std::uint64_t w, std::uint64_t warm) {
  const std::size_t n = c.size();
  std::vector<double> d(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) d[k + 1] = d[k] + std::min(c[k], alpha * (k + 1) - d[k]);
  Oracle o;
  for (std::size_t t = std::max<std::uint64_t>(1, warm); t < n; ++t) {
    const double a = alpha * t;
    std::size_t u = 0;
    while (t + u <= n && d[t + u] < a - 1e-9 * (1.0 + a)) ++u;
    if (t + u <= n) {
      ++o.measured;
      if (u > w) ++o.violations;
      o.max_delay = std::max<std::uint64_t>(o.max_delay, u);
    } else if (n - t > w) {
      ++o.measured;
      ++o.violations;
      o.max_delay = std::max<std::uint64_t>(o.max_delay, n - t + 1);
    }
  }
  return o;
}

SystemParams fig_params(CsiMode mode, double p_ul_db = 15.0) {
  SystemParams p;
  p.csi_mode = mode;
  p.p_uplink = db_to_linear(p_ul_db);
  return p;
}

QueueSimConfig ideal_config(int nt, int T) {
  SystemParams p = fig_params(CsiMode::Ideal);
  p.n_antennas = nt;
  QueueSimConfig cfg;
  cfg.n_antennas = nt;
  cfg.superframe_len = T;
  cfg.split = superframe_partition(120, T, nt);
  cfg.group_a = ideal_group(derive_budget(p, cfg.split.k_a));
  cfg.group_b = ideal_group(derive_budget(p, cfg.split.k_b));
  return cfg;
}

}  // namespace

TEST_CASE("fluid queue against brute-force delays") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const double alpha = 0.5 + 4.0 * rng.uniform();
    const double busy = 0.2 + 0.6 * rng.uniform();
    const double load = 0.8 + 0.4 * rng.uniform();
    std::vector<double> c(3000);
    for (auto& x : c) x = rng.uniform() < busy ? 2.0 * rng.uniform() * alpha / (busy * load) : 0.0;
    for (int w : {0, 3, 17}) {
      for (std::int64_t warm : {std::int64_t{0}, std::int64_t{5}, std::int64_t{-1}}) {
        CAPTURE(trial);
        CAPTURE(w);
        CAPTURE(warm);
        const auto tr = run_queue(ServiceSequence::dense(c), alpha, w, warm, true);
        const auto o = brute_force(c, alpha, w, warm < 0 ? 10 * w : warm);
        CHECK(tr.measured == o.measured);
        CHECK(tr.violations == o.violations);
        CHECK(tr.max_delay_seen == o.max_delay);
        CHECK(tr.delay_mismatches == 0);
        CHECK(tr.pv_hat >= 0.0);
        CHECK(tr.pv_hat <= 1.0);
      }
    }
  }
}

TEST_CASE("fluid queue edge cases") {
  std::vector<double> c{0, 0, 5, 0, 0, 5, 0, 0, 5, 0, 0, 5};
  // one bit per slot, five bits every third slot: the oldest bit waits at most two slots
  auto tr = run_queue(ServiceSequence::dense(c), 1.0, 1, 0);
  CHECK(tr.max_delay_seen == 2);
  CHECK(tr.violations > 0);
  tr = run_queue(ServiceSequence::dense(c), 1.0, 2, 0);
  CHECK(tr.violations == 0);

  tr = run_queue(ServiceSequence::dense(c), 0.0, 0, 0);
  CHECK(tr.pv_hat == 0.0);
  CHECK(tr.max_delay_seen == 0);

  tr = run_queue(ServiceSequence::dense(std::vector<double>(500, 0.0)), 1.0, 10, 0);
  CHECK(tr.pv_hat == 1.0);
  CHECK(tr.measured == 489);

  // warm-up longer than the run measures nothing
  tr = run_queue(ServiceSequence::dense(c), 1.0, 10, -1);
  CHECK(tr.measured == 0);
  CHECK(tr.pv_hat == 0.0);

  CHECK_THROWS_AS(run_queue(ServiceSequence::dense(c), -1.0, 1, 0), Error);
}

TEST_CASE("zero arrivals and zero rates") {
  const auto p = fig_params(CsiMode::ImperfectCsi);
  const auto b = derive_budget(p, 5);
  auto grid = make_mu_grid(b, 32);
  RatePolicy zero;
  zero.rates.assign(grid.size(), 0.0);
  zero.errors.assign(grid.size(), 0.0);
  QueueSimConfig cfg;
  cfg.superframe_len = 24;
  cfg.split = superframe_partition(120, 24, 8);
  cfg.group_a = policy_group(b, grid, zero);

  Rng rng(3);
  const double alphas[] = {0.0, 10.0};
  auto tr = simulate_queue(cfg, alphas, 20000, rng);
  CHECK(tr[0].pv_hat == 0.0);
  CHECK(tr[0].max_delay_seen == 0);
  CHECK(tr[1].pv_hat == 1.0);

  cfg.mode = ServiceDrawMode::FullChannelMC;
  Rng rng2(3);
  tr = simulate_queue(cfg, alphas, 20000, rng2);
  CHECK(tr[0].pv_hat == 0.0);
  CHECK(tr[1].pv_hat == 1.0);
}

TEST_CASE("error-free policy gives deterministic service") {
  const auto p = fig_params(CsiMode::ImperfectCsi);
  const auto b = derive_budget(p, 5);
  const auto grid = make_mu_grid(b, 32);
  RatePolicy flat;
  flat.rates.assign(grid.size(), 3.0);
  flat.errors.assign(grid.size(), 0.0);
  QueueSimConfig cfg;
  cfg.superframe_len = 24;
  cfg.split = superframe_partition(120, 24, 8);
  cfg.group_a = policy_group(b, grid, flat);
  Rng rng(5);
  const auto seq = draw_service_sequence(cfg, 24 * 1000, rng);
  CHECK(seq.bits.size() == 1000);
  for (double x : seq.bits) CHECK(x == 3.0 * b.n_data);
  for (int s : seq.slot) {
    CHECK(s >= 0);
    CHECK(s < 24);
  }
}

TEST_CASE("perfect CSI with rates below capacity never fails") {
  SystemParams p = fig_params(CsiMode::Ideal);
  const auto b = derive_budget(p, 6);
  const auto grid = make_mu_grid(b, 8);
  RatePolicy pol;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    pol.rates.push_back(std::log2(1.0 + grid.edges[i]) * (1.0 - 1e-12));
    pol.errors.push_back(0.0);
  }
  QueueSimConfig cfg;
  cfg.superframe_len = 20;
  cfg.split = superframe_partition(120, 20, 8);
  cfg.group_a = policy_group(b, grid, pol);
  cfg.mode = ServiceDrawMode::FullChannelMC;
  for (bool fbl : {false, true}) {
    cfg.finite_blocklength = fbl;
    Rng rng(9);
    const auto seq = draw_service_sequence(cfg, 20 * 20000, rng);
    std::size_t zeros = 0;
    for (double x : seq.bits) {
      if (x == 0.0) {
        ++zeros;
        continue;
      }
      // every served slot delivers the full rate of some cell
      const bool on_grid = std::any_of(pol.rates.begin(), pol.rates.end(), [&](double r) { return x == b.n_data * r; });
      CHECK(on_grid);
    }
    // only the first cell (rate 0) serves nothing when decoding is threshold-based
    const double p0 = grid.probs[0];
    const double sd = std::sqrt(p0 * (1 - p0) / 20000.0);
    if (!fbl) CHECK(std::abs(zeros / 20000.0 - p0) < 4.0 * sd);
    else CHECK(zeros / 20000.0 >= p0 - 4.0 * sd);
  }

  // above capacity everything fails
  RatePolicy high = pol;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) high.rates[i] = std::log2(1.0 + grid.edges[i + 1]) * 1.001;
  high.rates.back() = 1000.0;
  cfg.group_a = policy_group(b, grid, high);
  cfg.finite_blocklength = false;
  Rng rng(9);
  const auto seq = draw_service_sequence(cfg, 20 * 5000, rng);
  for (double x : seq.bits) CHECK(x == 0.0);
}

TEST_CASE("slot assignment follows the group split") {
  auto cfg = ideal_config(8, 28);
  REQUIRE(!cfg.split.degenerate());
  Rng rng(21);
  const auto seq = draw_service_sequence(cfg, 28ull * 40000, rng);
  std::size_t in_a = 0;
  std::vector<int> hits(28, 0);
  for (int s : seq.slot) {
    ++hits[s];
    if (s < cfg.split.t_a) ++in_a;
  }
  const double pa = cfg.split.p_a.value();
  CHECK(std::abs(in_a / 40000.0 - pa) < 4.0 * std::sqrt(pa * (1 - pa) / 40000.0));
  // slots within a group are equally likely, A slots by k_a/K_tot and B slots by k_b/K_tot
  for (int s = 0; s < 28; ++s) {
    const double q = (s < cfg.split.t_a ? cfg.split.k_a : cfg.split.k_b) / 120.0;
    CHECK(std::abs(hits[s] / 40000.0 - q) < 5.0 * std::sqrt(q * (1 - q) / 40000.0));
  }

  cfg.split.t_a += 1;
  CHECK_THROWS_AS(draw_service_sequence(cfg, 100, rng), Error);
}

TEST_CASE("coupled draws, determinism and validation") {
  auto cfg = ideal_config(8, 20);
  const double es = mean_rate_ideal(cfg.group_a.budget) * cfg.group_a.budget.n_data / 20.0;
  std::vector<double> alphas;
  for (double f = 0.9; f < 1.06; f += 0.01) alphas.push_back(f * es);
  Rng r1(77), r2(77), r3(78);
  const auto a = simulate_queue(cfg, alphas, 200000, r1);
  const auto b = simulate_queue(cfg, alphas, 200000, r2);
  const auto c = simulate_queue(cfg, alphas, 200000, r3);
  bool any_diff = false;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    CHECK(a[i].violations == b[i].violations);
    CHECK(a[i].max_delay_seen == b[i].max_delay_seen);
    CHECK(a[i].seed == Rng(77).seed());
    if (i > 0) {
      CHECK(a[i].violations >= a[i - 1].violations);
      CHECK(a[i].pv_hat >= a[i - 1].pv_hat);
    }
    any_diff = any_diff || a[i].violations != c[i].violations;
  }
  CHECK(any_diff);
  CHECK(a.back().pv_hat > 0.5);

  Rng r4(77);
  auto bad = cfg;
  bad.mode = ServiceDrawMode::FullChannelMC;
  const auto p = fig_params(CsiMode::ImperfectCsi);
  const auto bud = derive_budget(p, 6);
  MuGrid no_edges = make_mu_grid(bud, 16);
  no_edges.edges.clear();
  RatePolicy pol;
  pol.rates.assign(16, 1.0);
  pol.errors.assign(16, 0.0);
  bad.group_a = policy_group(bud, no_edges, pol);
  CHECK_THROWS_AS(draw_service_sequence(bad, 100, r4), Error);
  pol.rates.pop_back();
  bad.group_a = policy_group(bud, make_mu_grid(bud, 16), pol);
  CHECK_THROWS_AS(draw_service_sequence(bad, 100, r4), Error);
  CHECK_THROWS_AS(simulate_queue(cfg, 1.0, 0, r4), Error);
}

TEST_CASE("both draw modes agree under perfect CSI") {
  auto cfg = ideal_config(8, 20);
  const double mean = mean_rate_ideal(cfg.group_a.budget) * cfg.group_a.budget.n_data;
  const std::uint64_t n_frames = 50000;
  Rng r1(5);
  auto x = draw_service_sequence(cfg, 20 * n_frames, r1).bits;
  cfg.mode = ServiceDrawMode::FullChannelMC;
  Rng r2(6);
  auto y = draw_service_sequence(cfg, 20 * n_frames, r2).bits;
  for (const auto* v : {&x, &y}) {
    double m = 0.0, m2 = 0.0;
    for (double b : *v) {
      m += b;
      m2 += b * b;
    }
    m /= n_frames;
    const double sd = std::sqrt((m2 / n_frames - m * m) / n_frames);
    CHECK(std::abs(m - mean) < 4.0 * sd);
  }
  // two-sample Kolmogorov-Smirnov at the 0.1 % level
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] < y[j]) ++i;
    else ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
  }
  CHECK(d < 1.95 * std::sqrt(2.0 / n_frames));

  // Eq.-8 and backlog delays agree along a real run
  cfg.cross_check = true;
  Rng r3(7);
  const auto tr = simulate_queue(cfg, 0.99 * mean / 20.0, 200000, r3);
  CHECK(tr.measured > 0);
  CHECK(tr.delay_mismatches == 0);
}

TEST_CASE("actual channel errors stay below the bound-based errors") {
  const auto p = fig_params(CsiMode::ImperfectCsi, 15.0);
  const auto b = derive_budget(p, 5);
  const AdaptiveService svc(b, BoundKind::UpperCorrelated, {128, 400, 4, true});
  QueueSimConfig cfg;
  cfg.superframe_len = 24;
  cfg.split = superframe_partition(120, 24, 8);
  cfg.group_a = policy_group(b, svc.grid(), svc.policy_at(2e-3));
  const double es = svc.service().expected_service(24);
  const double alphas[] = {0.9 * es, 0.95 * es, es};
  Rng r1(1);
  const auto an = simulate_queue(cfg, alphas, 300000, r1);
  cfg.mode = ServiceDrawMode::FullChannelMC;
  Rng r2(2);
  const auto mc = simulate_queue(cfg, alphas, 300000, r2);
  for (std::size_t i = 0; i < 3; ++i) {
    CAPTURE(i);
    CHECK(mc[i].pv_hat <= an[i].pv_hat + 3.0 * std::hypot(an[i].stderr_pv(), mc[i].stderr_pv()));
  }
}
