#include "misodelay/rate_adaptation.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

#include "misodelay/error.hpp"

namespace misodelay {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log((1 - ε) e^{-x} + ε) from log ε and log(1 - ε)
double log_objective(double log_eps, double log_keep, double x) { return log_add(log_keep - x, log_eps); }

struct CellChoice {
  std::vector<std::size_t> index;
  std::vector<double> log_value;
  std::size_t repairs = 0;
};

// Raises cells that fall more than one grid step below an earlier cell.
std::size_t repair_monotone(std::vector<std::size_t>& index) {
  std::size_t repairs = 0;
  std::size_t top = 0;
  for (auto& j : index) {
    if (j + 1 < top) {
      j = top;
      ++repairs;
    }
    top = std::max(top, j);
  }
  return repairs;
}

CellChoice choose_for_s(const ErrorTable& table, const DerivedBudget& budget, double s) {
  if (!(s > 0.0)) throw Error(Errc::DomainError, "s must be > 0");
  const std::size_t nr = table.n_rates();
  std::vector<double> x(nr);
  for (std::size_t j = 0; j < nr; ++j) x[j] = s * budget.n_data * table.rates()[j];
  CellChoice c;
  c.index.resize(table.n_mu());
  c.log_value.resize(table.n_mu());
  for (std::size_t i = 0; i < table.n_mu(); ++i) {
    const double* le = table.log_eps_row(i);
    const double* lk = table.log_keep_row(i);
    std::size_t best = 0;
    double best_v = log_objective(le[0], lk[0], x[0]);
    for (std::size_t j = 1; j < nr; ++j) {
      // once ε = 1 every larger rate scores 0 as well
      if (le[j] == 0.0) break;
      const double v = log_objective(le[j], lk[j], x[j]);
      if (v < best_v) {
        best_v = v;
        best = j;
      }
    }
    c.index[i] = best;
    c.log_value[i] = best_v;
  }
  c.repairs = repair_monotone(c.index);
  if (c.repairs > 0) {
    for (std::size_t i = 0; i < table.n_mu(); ++i) {
      const std::size_t j = c.index[i];
      c.log_value[i] = log_objective(table.log_eps_row(i)[j], table.log_keep_row(i)[j], x[j]);
    }
  }
  return c;
}

RatePolicy policy_from(const ErrorTable& table, const std::vector<std::size_t>& index, double s, std::size_t repairs) {
  RatePolicy p;
  p.rates.resize(index.size());
  p.errors.resize(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    p.rates[i] = table.rates()[index[i]];
    p.errors[i] = table.at(i, index[i]);
  }
  p.s_used = s;
  p.bound_kind = table.kind();
  p.repairs = repairs;
  return p;
}

}  // namespace

std::vector<double> make_rate_grid(double mu_max, std::size_t n_points) {
  if (n_points < 2 || !(mu_max > 0.0)) throw Error(Errc::InvalidParameter, "rate grid needs >= 2 points and mu_max > 0");
  const double top = std::log2(1.0 + mu_max);
  std::vector<double> r(n_points);
  for (std::size_t j = 0; j < n_points; ++j) r[j] = top * static_cast<double>(j) / static_cast<double>(n_points - 1);
  return r;
}

ErrorTable::ErrorTable(const MuGrid& grid, const DerivedBudget& budget, std::vector<double> rate_grid, BoundKind kind)
    : n_mu_(grid.size()), rates_(std::move(rate_grid)), kind_(kind), eps_(grid.size() * rates_.size()) {
  if (rates_.empty()) throw Error(Errc::InvalidParameter, "empty rate grid");
  for (std::size_t j = 1; j < rates_.size(); ++j)
    if (!(rates_[j] > rates_[j - 1])) throw Error(Errc::InvalidParameter, "rate grid must be strictly increasing");
  const bool fbl = kind == BoundKind::FblUpperCorrelated;
  const std::size_t nq = grid.sub_weights.size();
  const bool averaged = nq > 0 && grid.sub_points.size() == n_mu_ * nq;
  for (std::size_t i = 0; i < n_mu_; ++i) {
    double* row = &eps_[i * rates_.size()];
    if (!averaged) {
      const auto stats = make_estimate_stats(budget, grid.points[i], fbl);
      for (std::size_t j = 0; j < rates_.size(); ++j) row[j] = error_probability(kind, stats, rates_[j]);
      continue;
    }
    for (std::size_t q = 0; q < nq; ++q) {
      const auto stats = make_estimate_stats(budget, grid.sub_points[i * nq + q], fbl);
      const double w = grid.sub_weights[q];
      for (std::size_t j = 0; j < rates_.size(); ++j) {
        const double e = error_probability(kind, stats, rates_[j]);
        if (e >= 1.0) {
          // nondecreasing in rate: the rest of the row is 1 as well
          for (std::size_t k = j; k < rates_.size(); ++k) row[k] += w;
          break;
        }
        row[j] += w * e;
      }
    }
    for (std::size_t j = 0; j < rates_.size(); ++j) row[j] = std::min(row[j], 1.0);
  }
  log_eps_.resize(eps_.size());
  log_keep_.resize(eps_.size());
  for (std::size_t k = 0; k < eps_.size(); ++k) {
    log_eps_[k] = eps_[k] > 0.0 ? std::log(eps_[k]) : kNegInf;
    log_keep_[k] = eps_[k] < 1.0 ? std::log1p(-eps_[k]) : kNegInf;
  }
}

RatePolicy optimize_rate_for_s(const ErrorTable& table, const DerivedBudget& budget, double s) {
  const auto c = choose_for_s(table, budget, s);
  return policy_from(table, c.index, s, c.repairs);
}

RatePolicy throughput_policy(const ErrorTable& table) {
  std::vector<std::size_t> index(table.n_mu());
  for (std::size_t i = 0; i < table.n_mu(); ++i) {
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t j = 0; j < table.n_rates(); ++j) {
      const double v = (1.0 - table.at(i, j)) * table.rates()[j];
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    index[i] = best;
  }
  const std::size_t repairs = repair_monotone(index);
  return policy_from(table, index, 0.0, repairs);
}

RatePolicy optimize_policy(const ErrorTable& table, const DerivedBudget& budget, std::span<const double> s_candidates,
                           const KernelEvaluator& evaluator) {
  if (s_candidates.empty()) throw Error(Errc::InvalidParameter, "no s candidates");
  RatePolicy best;
  double best_v = std::numeric_limits<double>::infinity();
  for (double s : s_candidates) {
    auto p = optimize_rate_for_s(table, budget, s);
    const double v = evaluator(s, p);
    if (v < best_v) {
      best_v = v;
      best = std::move(p);
    }
  }
  if (!std::isfinite(best_v)) throw Error(Errc::AllCandidatesUnstable, "no candidate s gives a convergent kernel");
  return best;
}

AdaptiveService::AdaptiveService(const DerivedBudget& budget, BoundKind kind, const AdaptiveOptions& opts)
    : budget_(budget),
      grid_(make_mu_grid(budget, opts.n_mu, opts.shrink, opts.n_sub)),
      table_(grid_, budget, make_rate_grid(grid_.mu_max, opts.n_rates), kind),
      throughput_(throughput_policy(table_)) {}

double AdaptiveService::log_mellin(double s) const {
  const auto c = choose_for_s(table_, budget_, s);
  double acc = kNegInf;
  for (std::size_t i = 0; i < grid_.size(); ++i) acc = log_add(acc, std::log(grid_.probs[i]) + c.log_value[i]);
  return std::min(acc, 0.0);
}

ServiceMellin AdaptiveService::service() const {
  ServiceMellin out;
  out.tag = ServiceTag::QuantizedPolicy;
  out.log_eval = [this](double s) { return log_mellin(s); };
  out.mean_bits = budget_.n_data * mean_rate_policy(grid_, throughput_);
  return memoized(std::move(out));
}

BoundKind default_bound_kind(CsiMode mode) {
  return mode == CsiMode::ImperfectCsiFiniteBlocklength ? BoundKind::FblUpperCorrelated : BoundKind::UpperCorrelated;
}

AdaptiveCache::AdaptiveCache(const AdaptiveOptions& opts, std::optional<BoundKind> kind) : opts_(opts), kind_(kind) {}

const AdaptiveCache::Entry& AdaptiveCache::entry(const SystemParams& params, int users) {
  const BoundKind k = kind_.value_or(default_bound_kind(params.csi_mode));
  const auto budget = derive_budget(params, users);
  const auto key = std::make_tuple(users, budget.n_data, budget.p_per_user, budget.sigma_e_sq, static_cast<int>(k));
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    auto svc = std::make_shared<const AdaptiveService>(budget, k, opts_);
    auto mellin = svc->service();
    // keep the service alive as long as the evaluator
    mellin.log_eval = [svc, f = std::move(mellin.log_eval)](double s) { return f(s); };
    it = entries_.emplace(key, Entry{svc, std::move(mellin)}).first;
  }
  return it->second;
}

std::shared_ptr<const AdaptiveService> AdaptiveCache::get(const SystemParams& params, int users) {
  return entry(params, users).service;
}

ServiceMellin AdaptiveCache::mellin(const SystemParams& params, int users) { return entry(params, users).mellin; }

ServiceBuilder adaptive_builder(std::shared_ptr<AdaptiveCache> cache) {
  return [cache](const SystemParams& params, const GroupSplit& split) {
    if (split.degenerate()) return cache->mellin(params, split.k_a);
    return mixed_service(split, cache->mellin(params, split.k_a), cache->mellin(params, split.k_b));
  };
}

ServiceBuilder adaptive_builder(const AdaptiveOptions& opts, std::optional<BoundKind> kind) {
  return adaptive_builder(std::make_shared<AdaptiveCache>(opts, kind));
}

void write_policy_csv(std::ostream& out, const MuGrid& grid, const RatePolicy& policy) {
  if (policy.rates.size() != grid.size() || policy.errors.size() != grid.size())
    throw Error(Errc::PolicyGridMismatch, "policy and grid sizes differ");
  out << "# misodelay-policy v1 s_used=" << std::setprecision(17) << policy.s_used
      << " bound=" << to_string(policy.bound_kind) << " repairs=" << policy.repairs << '\n';
  out << "mu,prob,rate,eps\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    out << grid.points[i] << ',' << grid.probs[i] << ',' << policy.rates[i] << ',' << policy.errors[i] << '\n';
}

std::pair<MuGrid, RatePolicy> read_policy_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# misodelay-policy v1", 0) != 0)
    throw Error(Errc::ConfigError, "not a v1 policy file");
  MuGrid grid;
  RatePolicy policy;
  std::istringstream head(line.substr(21));
  std::string field;
  while (head >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const auto key = field.substr(0, eq);
    const auto val = field.substr(eq + 1);
    if (key == "s_used") policy.s_used = std::stod(val);
    else if (key == "repairs") policy.repairs = std::stoull(val);
    else if (key == "bound") {
      if (val == "upper") policy.bound_kind = BoundKind::UpperCorrelated;
      else if (val == "fbl_upper") policy.bound_kind = BoundKind::FblUpperCorrelated;
      else if (val == "lower") policy.bound_kind = BoundKind::LowerUncorrelated;
      else throw Error(Errc::ConfigError, "unknown bound kind " + val);
    }
  }
  if (!std::getline(in, line) || line != "mu,prob,rate,eps") throw Error(Errc::ConfigError, "bad policy header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double v[4];
    char comma;
    if (!(row >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3]))
      throw Error(Errc::ConfigError, "bad policy row: " + line);
    grid.points.push_back(v[0]);
    grid.probs.push_back(v[1]);
    policy.rates.push_back(v[2]);
    policy.errors.push_back(v[3]);
  }
  return {grid, policy};
}

}  // namespace misodelay
