#include "misodelay/config.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "misodelay/error.hpp"

namespace misodelay {
namespace {

Ratio make_ratio(std::int64_t num, std::int64_t den) {
  const std::int64_t g = std::gcd(num, den);
  return g == 0 ? Ratio{0, 1} : Ratio{num / g, den / g};
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::InvalidParameter, what);
}

}  // namespace

std::string_view to_string(CsiMode mode) {
  switch (mode) {
    case CsiMode::Ideal: return "ideal";
    case CsiMode::ImperfectCsi: return "imperfect_csi";
    case CsiMode::ImperfectCsiFiniteBlocklength: return "imperfect_csi_fbl";
  }
  return "unknown";
}

void SystemParams::validate() const {
  require(n_antennas >= 1, "n_antennas must be >= 1");
  require(n_users_total >= 1, "n_users_total must be >= 1");
  require(superframe_len >= 1, "superframe_len must be >= 1");
  require(n_slot_symbols >= 1, "n_slot_symbols must be >= 1");
  require(n_ul_train >= 0 && n_dl_train >= 0, "training lengths must be >= 0");
  require(p_total > 0.0, "p_total must be > 0");
  require(csi_mode == CsiMode::Ideal || p_uplink > 0.0, "p_uplink must be > 0 under imperfect CSI");
  require(csi_mode == CsiMode::Ideal || n_ul_train >= 1, "n_ul_train must be >= 1 under imperfect CSI");
  require(arrival_rate >= 0.0, "arrival_rate must be >= 0");
  require(deadline >= 1, "deadline must be >= 1");
}

DerivedBudget derive_budget(const SystemParams& params, int k_sched) {
  if (k_sched < 1) throw Error(Errc::InvalidParameter, "k_sched must be >= 1");
  if (k_sched > params.n_antennas) {
    throw Error(Errc::KExceedsAntennas, "K=" + std::to_string(k_sched) +
                                            " exceeds N_t=" + std::to_string(params.n_antennas));
  }
  DerivedBudget b;
  b.k_sched = k_sched;
  b.m = params.n_antennas - k_sched + 1;
  b.p_per_user = params.p_total / k_sched;
  if (params.csi_mode == CsiMode::Ideal) {
    b.n_data = params.n_slot_symbols;
    b.sigma_e_sq = 0.0;
  } else {
    const long overhead = static_cast<long>(k_sched) * (params.n_ul_train + params.n_dl_train);
    const long n_data = params.n_slot_symbols - overhead;
    if (n_data <= 0) {
      throw Error(Errc::TrainingOverheadExceedsSlot,
                  "K=" + std::to_string(k_sched) + " needs " + std::to_string(overhead) +
                      " training symbols of " + std::to_string(params.n_slot_symbols));
    }
    b.n_data = static_cast<int>(n_data);
    b.sigma_e_sq = 1.0 / (1.0 + params.p_uplink * params.n_ul_train);
  }
  return b;
}

GroupSplit superframe_partition(int n_users_total, int superframe_len, int n_antennas) {
  if (superframe_len < 1 || n_users_total < 1) {
    throw Error(Errc::InvalidParameter, "superframe_len and n_users_total must be >= 1");
  }
  if (superframe_len > n_users_total) {
    throw Error(Errc::InfeasibleSchedule, "superframe longer than the user population leaves empty slots");
  }
  const int k_b = n_users_total / superframe_len;
  const int rem = n_users_total % superframe_len;
  const int k_a = rem == 0 ? k_b : k_b + 1;
  if (k_a > n_antennas) {
    throw Error(Errc::InfeasibleSchedule, "ceil(K_tot/T)=" + std::to_string(k_a) +
                                              " exceeds N_t=" + std::to_string(n_antennas));
  }
  GroupSplit g;
  g.k_a = k_a;
  g.k_b = k_b;
  g.k_avg = make_ratio(n_users_total, superframe_len);
  if (rem == 0) {
    g.t_a = superframe_len;
    g.t_b = 0;
    g.p_a = Ratio{1, 1};
    g.p_b = Ratio{0, 1};
    return g;
  }
  // t_a*k_a + t_b*k_b = K_tot with k_a = k_b + 1 gives t_a = K_tot - T*k_b.
  g.t_a = rem;
  g.t_b = superframe_len - rem;
  g.p_a = make_ratio(static_cast<std::int64_t>(k_a) * g.t_a, n_users_total);
  g.p_b = make_ratio(static_cast<std::int64_t>(k_b) * g.t_b, n_users_total);
  return g;
}

GroupSplit superframe_partition(const SystemParams& params) {
  return superframe_partition(params.n_users_total, params.superframe_len, params.n_antennas);
}

DeadlineSplit deadline_partition(int deadline, int superframe_len) {
  if (superframe_len < 1) throw Error(Errc::InvalidParameter, "superframe_len must be >= 1");
  if (deadline < superframe_len) {
    throw Error(Errc::DeadlineShorterThanSuperframe,
                "w=" + std::to_string(deadline) + " < T=" + std::to_string(superframe_len));
  }
  DeadlineSplit d;
  const int rem = deadline % superframe_len;
  d.n_frames_lo = deadline / superframe_len;
  d.n_frames_hi = rem == 0 ? d.n_frames_lo : d.n_frames_lo + 1;
  d.p_group2 = make_ratio(rem, superframe_len);
  d.p_group1 = make_ratio(superframe_len - rem, superframe_len);
  return d;
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace misodelay
