#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <mutex>
#include <memory>
#include <span>
#include <tuple>
#include <vector>

#include "misodelay/config.hpp"
#include "misodelay/delay_bound.hpp"
#include "misodelay/outage_bounds.hpp"
#include "misodelay/service_model.hpp"

namespace misodelay {

/// Rate per μ-grid cell and the resulting error probability.
struct RatePolicy {
  std::vector<double> rates;
  std::vector<double> errors;
  double s_used = 0.0;  // 0 for the throughput-maximizing policy
  BoundKind bound_kind = BoundKind::UpperCorrelated;
  std::size_t repairs = 0;  // cells raised to keep rates nondecreasing in μ
};

/// Uniform grid on [0, log2(1 + mu_max)].
std::vector<double> make_rate_grid(double mu_max, std::size_t n_points = 400);

/// ε(r_j, μ_i) for all cells and rates, averaged over the grid's sub-points when it has them.
/// Independent of s, so built once per group size.
class ErrorTable {
 public:
  ErrorTable(const MuGrid& grid, const DerivedBudget& budget, std::vector<double> rate_grid, BoundKind kind);

  std::size_t n_mu() const { return n_mu_; }
  std::size_t n_rates() const { return rates_.size(); }
  const std::vector<double>& rates() const { return rates_; }
  BoundKind kind() const { return kind_; }
  double at(std::size_t i, std::size_t j) const { return eps_[i * rates_.size() + j]; }
  /// Row i of log ε and log(1 - ε).
  const double* log_eps_row(std::size_t i) const { return &log_eps_[i * rates_.size()]; }
  const double* log_keep_row(std::size_t i) const { return &log_keep_[i * rates_.size()]; }

 private:
  std::size_t n_mu_;
  std::vector<double> rates_;
  BoundKind kind_;
  std::vector<double> eps_;
  std::vector<double> log_eps_;
  std::vector<double> log_keep_;
};

/// Per cell, the grid rate minimizing (1 - ε) e^{-s n_d r} + ε, ties toward the smaller rate.
/// A cell whose rate drops more than one grid step below a lower cell is raised to that rate.
RatePolicy optimize_rate_for_s(const ErrorTable& table, const DerivedBudget& budget, double s);

/// Per cell, the grid rate maximizing (1 - ε) r (the s → 0⁺ limit of the kernel objective).
RatePolicy throughput_policy(const ErrorTable& table);

/// Maps (s, policy optimized for s) to the quantity to minimize, +inf when unusable.
using KernelEvaluator = std::function<double(double, const RatePolicy&)>;

/// Optimizes the policy at every candidate s and keeps the one with the smallest evaluator value.
RatePolicy optimize_policy(const ErrorTable& table, const DerivedBudget& budget, std::span<const double> s_candidates,
                           const KernelEvaluator& evaluator);

struct AdaptiveOptions {
  std::size_t n_mu = 512;
  std::size_t n_rates = 400;
  int n_sub = 4;
  bool shrink = true;
};

/// Service of one group size under the rate policy re-optimized for every s.
class AdaptiveService {
 public:
  AdaptiveService(const DerivedBudget& budget, BoundKind kind, const AdaptiveOptions& opts = {});

  const DerivedBudget& budget() const { return budget_; }
  const MuGrid& grid() const { return grid_; }
  const ErrorTable& table() const { return table_; }

  RatePolicy policy_at(double s) const { return optimize_rate_for_s(table_, budget_, s); }
  const RatePolicy& throughput() const { return throughput_; }
  /// log 𝓜_𝒮(1 - s) under policy_at(s).
  double log_mellin(double s) const;
  /// Mean bits per superframe taken from the throughput-maximizing policy.
  ServiceMellin service() const;

 private:
  DerivedBudget budget_;
  MuGrid grid_;
  ErrorTable table_;
  RatePolicy throughput_;
};

/// Adaptive services keyed by group size and budget (thread-safe). The bound kind follows the CSI
/// mode unless `kind` is given.
class AdaptiveCache {
 public:
  explicit AdaptiveCache(const AdaptiveOptions& opts = {}, std::optional<BoundKind> kind = std::nullopt);

  std::shared_ptr<const AdaptiveService> get(const SystemParams& params, int users);
  /// Memoized Mellin transform of get(params, users).
  ServiceMellin mellin(const SystemParams& params, int users);

 private:
  struct Entry {
    std::shared_ptr<const AdaptiveService> service;
    ServiceMellin mellin;
  };
  const Entry& entry(const SystemParams& params, int users);

  AdaptiveOptions opts_;
  std::optional<BoundKind> kind_;
  std::mutex mutex_;
  std::map<std::tuple<int, int, double, double, int>, Entry> entries_;
};

/// Builder for delay_bound's schedule scan backed by `cache`.
ServiceBuilder adaptive_builder(std::shared_ptr<AdaptiveCache> cache);
ServiceBuilder adaptive_builder(const AdaptiveOptions& opts = {}, std::optional<BoundKind> kind = std::nullopt);

BoundKind default_bound_kind(CsiMode mode);

/// Versioned CSV with columns mu,prob,rate,eps.
void write_policy_csv(std::ostream& out, const MuGrid& grid, const RatePolicy& policy);
/// Reads what write_policy_csv wrote. Edges are not stored; the returned grid has none.
std::pair<MuGrid, RatePolicy> read_policy_csv(std::istream& in);

}  // namespace misodelay
