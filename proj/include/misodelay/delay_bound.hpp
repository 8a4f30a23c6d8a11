#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "misodelay/config.hpp"
#include "misodelay/service_model.hpp"

namespace misodelay {

/// Kernel in log form; `divergent` when e^{αTs} 𝓜_𝒮(1-s) ≥ 1.
struct LogKernel {
  double log_value = 0.0;
  bool divergent = true;
};

LogKernel log_kernel(double log_mellin, double alpha, int superframe_len, int frames, double s);

/// 𝓜_𝒮(1-s)^frames / (1 - e^{αTs} 𝓜_𝒮(1-s)); empty when divergent.
std::optional<double> kernel(const ServiceMellin& service, double alpha, int superframe_len, int frames, double s);

/// log of p₁ 𝓚(s, ⌈w/T⌉) + p₂ 𝓚(s, ⌊w/T⌋); +inf when divergent.
double log_pv_bound(double log_mellin, double alpha, const DeadlineSplit& split, int superframe_len, double s);
std::optional<double> pv_bound(const ServiceMellin& service, double alpha, const DeadlineSplit& split,
                               int superframe_len, double s);

/// Grid-then-refine search over s for a function that is +inf where the kernel diverges.
struct SSearchOptions {
  double s_lo = 1e-4;
  double s_hi = 1.0;
  int n_grid = 31;
  int max_extensions = 4;  // decades added when the optimum sits on a grid boundary
  double log_s_tol = 1e-4;
  bool refine = true;  // golden-section refinement around the best grid point
};

struct SSearchResult {
  double s = 0.0;
  double value = std::numeric_limits<double>::infinity();
  bool finite() const { return std::isfinite(value); }
};

SSearchResult minimize_over_s(const std::function<double(double)>& f, const SSearchOptions& opts = {});

struct DelayBoundResult {
  double pv_bound = 1.0;
  double log_pv = 0.0;
  double log_pv_raw = 0.0;  // before clamping at 0; ranks schedules whose bound exceeds 1
  double s_star = 0.0;
  bool stable = false;
  std::vector<std::pair<double, int>> kernel_terms;  // (kernel value, frames) at s_star
  Ratio k_avg_used{0, 1};
};

DelayBoundResult optimize_s(const ServiceMellin& service, double alpha, const DeadlineSplit& split,
                            int superframe_len, const SSearchOptions& opts = {});

/// Builds the service model for one superframe layout.
using ServiceBuilder = std::function<ServiceMellin(const SystemParams&, const GroupSplit&)>;

/// Perfect-CSI service with the rate matched to the channel, cached per group size.
ServiceBuilder ideal_builder();

struct ScheduleCandidate {
  int superframe_len = 0;
  GroupSplit split;
  ServiceMellin service;
};

/// Every superframe length T with ⌈K_tot/T⌉ ≤ N_t, T ≤ K_tot and T ≤ w whose service model can be
/// built (training overhead must leave data symbols).
std::vector<ScheduleCandidate> schedule_candidates(const SystemParams& params, const ServiceBuilder& builder);

struct ScheduleResult {
  int superframe_len = 0;
  GroupSplit split;
  double expected_service = 0.0;  // bits per slot
  DelayBoundResult bound;
};

/// Minimizes the bound over the candidates for `params.arrival_rate`; ties go to the smaller K̄.
ScheduleResult optimize_schedule(const SystemParams& params, const std::vector<ScheduleCandidate>& candidates,
                                 const SSearchOptions& opts = {});
ScheduleResult optimize_schedule(const SystemParams& params, const ServiceBuilder& builder,
                                 const SSearchOptions& opts = {});

/// Candidate with the largest expected service per slot; ties go to the smaller K̄.
const ScheduleCandidate& max_expected_service(const std::vector<ScheduleCandidate>& candidates);

}  // namespace misodelay
