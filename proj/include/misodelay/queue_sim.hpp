#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "misodelay/config.hpp"
#include "misodelay/numerics.hpp"
#include "misodelay/rate_adaptation.hpp"
#include "misodelay/service_model.hpp"

namespace misodelay {

enum class ServiceDrawMode {
  AnalyticEps,    // cell drawn by probability, success with probability 1 - ε_i
  FullChannelMC,  // estimate, beamformers and estimation error drawn per scheduled slot
};

/// Service of the tagged user in a slot shared with `budget.k_sched` users. Without a policy the
/// rate matches the channel exactly (perfect CSI).
struct GroupService {
  DerivedBudget budget;
  std::shared_ptr<const MuGrid> grid;
  std::shared_ptr<const RatePolicy> policy;
};

GroupService ideal_group(const DerivedBudget& budget);
GroupService policy_group(const DerivedBudget& budget, MuGrid grid, RatePolicy policy);

struct QueueSimConfig {
  int n_antennas = 8;
  int n_users_total = 120;
  int superframe_len = 24;
  int deadline = 120;
  GroupSplit split;
  GroupService group_a;
  GroupService group_b;  // unused when split.degenerate()
  ServiceDrawMode mode = ServiceDrawMode::AnalyticEps;
  // FullChannelMC only: decode with the finite-blocklength coin instead of the SINR threshold
  bool finite_blocklength = false;
  std::int64_t warmup_slots = -1;  // -1 selects 10·w
  bool cross_check = false;        // recompute every delay from the backlog and count mismatches
};

struct QueueTrace {
  std::uint64_t n_slots = 0;
  std::uint64_t measured = 0;  // arrival instants with a resolvable delay
  std::uint64_t violations = 0;
  double pv_hat = 0.0;
  std::uint64_t max_delay_seen = 0;  // slots; a lower bound if the last arrivals never left
  std::uint64_t seed = 0;
  std::uint64_t delay_mismatches = 0;
  double arrival_rate = 0.0;

  /// Binomial standard error of pv_hat.
  double stderr_pv() const;
};

/// Service of the tagged user: one scheduled slot per superframe, zero elsewhere.
struct ServiceSequence {
  int superframe_len = 1;
  std::uint64_t n_slots = 0;
  std::vector<int> slot;     // position of the scheduled slot in superframe f
  std::vector<double> bits;  // bits served in it

  double at(std::uint64_t t) const {
    const auto f = t / static_cast<std::uint64_t>(superframe_len);
    return static_cast<int>(t % static_cast<std::uint64_t>(superframe_len)) == slot[f] ? bits[f] : 0.0;
  }
  /// Sequence with the given per-slot service (superframes of one slot).
  static ServiceSequence dense(std::vector<double> per_slot);
};

/// The user's position in each superframe is uniform over the K_tot positions, A slots first.
ServiceSequence draw_service_sequence(const QueueSimConfig& cfg, std::uint64_t n_slots, Rng& rng);

/// Fluid FIFO queue fed α bits per slot and drained by `service`; backlog follows
/// B_{t+1} = max(0, B_t + α - c_t). The bits that arrived by instant t violate when
/// D(0, t+w) < A(0, t). Instants before `warmup_slots` (-1: 10·w) are not measured.
QueueTrace run_queue(const ServiceSequence& service, double alpha, int deadline, std::int64_t warmup_slots = -1,
                     bool cross_check = false);

/// One service sequence drawn from `rng`, shared by every α (coupled draws).
std::vector<QueueTrace> simulate_queue(const QueueSimConfig& cfg, std::span<const double> alphas,
                                       std::uint64_t n_slots, Rng& rng);
QueueTrace simulate_queue(const QueueSimConfig& cfg, double alpha, std::uint64_t n_slots, Rng& rng);

}  // namespace misodelay
