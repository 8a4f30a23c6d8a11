#pragma once

#include <cstdint>
#include <string_view>

namespace misodelay {

enum class CsiMode { Ideal, ImperfectCsi, ImperfectCsiFiniteBlocklength };

std::string_view to_string(CsiMode mode);

/// Static scenario constants. Powers are linear SNRs, lengths are channel uses or slots.
struct SystemParams {
  int n_antennas = 8;
  int n_users_total = 120;
  int superframe_len = 40;
  int n_slot_symbols = 400;
  int n_ul_train = 10;
  int n_dl_train = 10;
  double p_total = 100.0;
  double p_uplink = 31.622776601683793;
  double arrival_rate = 0.0;
  int deadline = 120;
  CsiMode csi_mode = CsiMode::Ideal;

  /// Throws Errc::InvalidParameter on the first violated invariant.
  void validate() const;
};

/// Per-slot quantities for a fixed number of scheduled users.
struct DerivedBudget {
  int k_sched = 1;
  int n_data = 1;
  int m = 1;                // N_t - K + 1
  double p_per_user = 1.0;  // equal power split P / K
  double sigma_e_sq = 0.0;  // 0 under perfect CSI
};

DerivedBudget derive_budget(const SystemParams& params, int k_sched);

/// Exact fraction with positive denominator.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Split of a superframe into slots serving ceil(K_avg) users (A) and floor(K_avg) users (B).
/// An integer K_avg is represented with t_b = 0 and p_a = 1.
struct GroupSplit {
  int k_a = 1;
  int k_b = 1;
  int t_a = 1;
  int t_b = 0;
  Ratio p_a{1, 1};
  Ratio p_b{0, 1};
  Ratio k_avg{1, 1};

  bool degenerate() const { return t_b == 0; }
};

GroupSplit superframe_partition(const SystemParams& params);
GroupSplit superframe_partition(int n_users_total, int superframe_len, int n_antennas);

/// Users served ceil(w/T) times (group 1) versus floor(w/T) times (group 2) before the deadline.
struct DeadlineSplit {
  int n_frames_hi = 1;
  int n_frames_lo = 1;
  Ratio p_group2{0, 1};
  Ratio p_group1{1, 1};
};

DeadlineSplit deadline_partition(int deadline, int superframe_len);

double db_to_linear(double db);

}  // namespace misodelay
