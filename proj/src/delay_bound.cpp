#include "misodelay/delay_bound.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

#include "misodelay/error.hpp"

namespace misodelay {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double k_avg_value(const GroupSplit& split) { return split.k_avg.value(); }

}  // namespace

LogKernel log_kernel(double log_mellin, double alpha, int superframe_len, int frames, double s) {
  const double z = alpha * superframe_len * s + log_mellin;
  if (!(z < 0.0)) return {kInf, true};
  return {frames * log_mellin - std::log(-std::expm1(z)), false};
}

std::optional<double> kernel(const ServiceMellin& service, double alpha, int superframe_len, int frames, double s) {
  const auto k = log_kernel(service.log_eval(s), alpha, superframe_len, frames, s);
  if (k.divergent) return std::nullopt;
  return std::exp(k.log_value);
}

double log_pv_bound(double log_mellin, double alpha, const DeadlineSplit& split, int superframe_len, double s) {
  const auto hi = log_kernel(log_mellin, alpha, superframe_len, split.n_frames_hi, s);
  if (hi.divergent) return kInf;
  const double p2 = split.p_group2.value();
  if (p2 == 0.0) return hi.log_value;
  const auto lo = log_kernel(log_mellin, alpha, superframe_len, split.n_frames_lo, s);
  const double p1 = split.p_group1.value();
  return log_add(std::log(p1) + hi.log_value, std::log(p2) + lo.log_value);
}

std::optional<double> pv_bound(const ServiceMellin& service, double alpha, const DeadlineSplit& split,
                               int superframe_len, double s) {
  const double v = log_pv_bound(service.log_eval(s), alpha, split, superframe_len, s);
  if (!std::isfinite(v)) return std::nullopt;
  return std::exp(v);
}

SSearchResult minimize_over_s(const std::function<double(double)>& f, const SSearchOptions& opts) {
  if (!(opts.s_lo > 0.0 && opts.s_hi > opts.s_lo && opts.n_grid >= 2))
    throw Error(Errc::InvalidParameter, "invalid s-search options");
  const double lo = std::log(opts.s_lo);
  const double step = (std::log(opts.s_hi) - lo) / (opts.n_grid - 1);
  const auto eval = [&](double log_s) {
    const double v = f(std::exp(log_s));
    return std::isnan(v) ? kInf : v;
  };
  std::vector<double> ls, vals;
  for (int k = 0; k < opts.n_grid; ++k) {
    ls.push_back(lo + k * step);
    vals.push_back(eval(ls.back()));
  }
  const int per_decade = std::max(1, static_cast<int>(std::lround(std::log(10.0) / step)));
  for (int ext = 0; ext < opts.max_extensions; ++ext) {
    const auto best = std::min_element(vals.begin(), vals.end()) - vals.begin();
    const bool none = !std::isfinite(vals[best]);
    if (none || best == 0) {
      for (int k = 0; k < per_decade; ++k) {
        ls.insert(ls.begin(), ls.front() - step);
        vals.insert(vals.begin(), eval(ls.front()));
      }
    } else if (best == static_cast<long>(vals.size()) - 1) {
      for (int k = 0; k < per_decade; ++k) {
        ls.push_back(ls.back() + step);
        vals.push_back(eval(ls.back()));
      }
    } else {
      break;
    }
  }
  const auto b = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  SSearchResult out{std::exp(ls[b]), vals[b]};
  if (!std::isfinite(vals[b]) || !opts.refine) return out;

  double a = b > 0 ? ls[b - 1] : ls[b] - step;
  double c = b + 1 < ls.size() ? ls[b + 1] : ls[b] + step;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = c - g * (c - a), x2 = a + g * (c - a);
  double f1 = eval(x1), f2 = eval(x2);
  while (c - a > opts.log_s_tol) {
    if (f1 <= f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - g * (c - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (c - a);
      f2 = eval(x2);
    }
  }
  if (f1 < out.value) out = {std::exp(x1), f1};
  if (f2 < out.value) out = {std::exp(x2), f2};
  return out;
}

DelayBoundResult optimize_s(const ServiceMellin& service, double alpha, const DeadlineSplit& split,
                            int superframe_len, const SSearchOptions& opts) {
  const auto f = [&](double s) { return log_pv_bound(service.log_eval(s), alpha, split, superframe_len, s); };
  const auto best = minimize_over_s(f, opts);
  DelayBoundResult r;
  r.stable = best.finite();
  if (!r.stable) return r;
  r.s_star = best.s;
  r.log_pv_raw = best.value;
  r.log_pv = std::min(best.value, 0.0);
  r.pv_bound = std::exp(r.log_pv);
  const double lm = service.log_eval(best.s);
  const auto hi = log_kernel(lm, alpha, superframe_len, split.n_frames_hi, best.s);
  const auto lo = log_kernel(lm, alpha, superframe_len, split.n_frames_lo, best.s);
  r.kernel_terms = {{std::exp(hi.log_value), split.n_frames_hi}, {std::exp(lo.log_value), split.n_frames_lo}};
  return r;
}

ServiceBuilder ideal_builder() {
  struct Cache {
    std::mutex mutex;
    std::map<std::pair<int, double>, ServiceMellin> services;
  };
  auto cache = std::make_shared<Cache>();
  return [cache](const SystemParams& params, const GroupSplit& split) {
    const auto get = [&](int users) {
      const auto budget = derive_budget(params, users);
      const std::pair<int, double> key{users, budget.p_per_user};
      std::lock_guard lock(cache->mutex);
      auto it = cache->services.find(key);
      if (it == cache->services.end()) it = cache->services.emplace(key, memoized(ideal_service(budget))).first;
      return it->second;
    };
    if (split.degenerate()) return get(split.k_a);
    return mixed_service(split, get(split.k_a), get(split.k_b));
  };
}

std::vector<ScheduleCandidate> schedule_candidates(const SystemParams& params, const ServiceBuilder& builder) {
  std::vector<ScheduleCandidate> out;
  const int t_min = (params.n_users_total + params.n_antennas - 1) / params.n_antennas;
  const int t_max = std::min(params.n_users_total, params.deadline);
  for (int t = t_min; t <= t_max; ++t) {
    SystemParams p = params;
    p.superframe_len = t;
    try {
      const auto split = superframe_partition(params.n_users_total, t, params.n_antennas);
      out.push_back({t, split, builder(p, split)});
    } catch (const Error& e) {
      if (e.code() != Errc::InfeasibleSchedule && e.code() != Errc::TrainingOverheadExceedsSlot &&
          e.code() != Errc::KExceedsAntennas)
        throw;
    }
  }
  return out;
}

const ScheduleCandidate& max_expected_service(const std::vector<ScheduleCandidate>& candidates) {
  if (candidates.empty()) throw Error(Errc::NoFeasibleSchedule, "no feasible superframe length");
  const ScheduleCandidate* best = &candidates.front();
  double best_v = best->service.expected_service(best->superframe_len);
  for (const auto& c : candidates) {
    const double v = c.service.expected_service(c.superframe_len);
    const bool better = v > best_v * (1.0 + 1e-12);
    const bool tie_smaller = std::abs(v - best_v) <= 1e-12 * best_v && k_avg_value(c.split) < k_avg_value(best->split);
    if (better || tie_smaller) {
      best = &c;
      best_v = v;
    }
  }
  return *best;
}

ScheduleResult optimize_schedule(const SystemParams& params, const std::vector<ScheduleCandidate>& candidates,
                                 const SSearchOptions& opts) {
  if (candidates.empty()) throw Error(Errc::NoFeasibleSchedule, "no feasible superframe length");
  const double alpha = params.arrival_rate;
  SSearchOptions coarse = opts;
  coarse.refine = false;
  struct Scored {
    const ScheduleCandidate* c;
    DelayBoundResult r;
  };
  std::vector<Scored> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) {
    const auto split = deadline_partition(params.deadline, c.superframe_len);
    scored.push_back({&c, optimize_s(c.service, alpha, split, c.superframe_len, coarse)});
  }
  const auto key = [](const DelayBoundResult& r) { return r.stable ? r.log_pv_raw : kInf; };
  const auto better = [&](const Scored& x, const Scored& y) {
    if (key(x.r) != key(y.r)) return key(x.r) < key(y.r);
    return k_avg_value(x.c->split) < k_avg_value(y.c->split);
  };
  std::sort(scored.begin(), scored.end(), better);
  if (opts.refine) {
    const std::size_t n_refine = std::min<std::size_t>(3, scored.size());
    for (std::size_t i = 0; i < n_refine; ++i) {
      if (!scored[i].r.stable) continue;
      const auto split = deadline_partition(params.deadline, scored[i].c->superframe_len);
      scored[i].r = optimize_s(scored[i].c->service, alpha, split, scored[i].c->superframe_len, opts);
    }
    std::sort(scored.begin(), scored.begin() + static_cast<long>(n_refine), better);
  }
  const auto& top = scored.front();
  ScheduleResult out;
  out.superframe_len = top.c->superframe_len;
  out.split = top.c->split;
  out.expected_service = top.c->service.expected_service(top.c->superframe_len);
  out.bound = top.r;
  out.bound.k_avg_used = top.c->split.k_avg;
  return out;
}

ScheduleResult optimize_schedule(const SystemParams& params, const ServiceBuilder& builder, const SSearchOptions& opts) {
  return optimize_schedule(params, schedule_candidates(params, builder), opts);
}

}  // namespace misodelay
