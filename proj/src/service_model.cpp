#include "misodelay/service_model.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <numbers>

#include "misodelay/error.hpp"
#include "misodelay/numerics.hpp"
#include "misodelay/rate_adaptation.hpp"

namespace misodelay {
namespace {

constexpr double kSeriesConditionLimit = 1e6;

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double s_tilde_of(const DerivedBudget& budget, double s) {
  if (!(s > 0.0)) throw Error(Errc::DomainError, "s must be > 0");
  return s * budget.n_data / std::numbers::ln2;
}

// Gauss-Legendre rule mapped to [0, 1].
template <int Q>
void unit_rule(std::vector<double>& nodes, std::vector<double>& weights) {
  using rule = boost::math::quadrature::gauss<double, Q>;
  const auto& x = rule::abscissa();
  const auto& w = rule::weights();
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] == 0.0) {
      nodes.push_back(0.5);
      weights.push_back(0.5 * w[k]);
      continue;
    }
    nodes.push_back(0.5 * (1.0 - x[k]));
    weights.push_back(0.5 * w[k]);
    nodes.push_back(0.5 * (1.0 + x[k]));
    weights.push_back(0.5 * w[k]);
  }
  std::vector<std::size_t> order(nodes.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nodes[a] < nodes[b]; });
  std::vector<double> n2, w2;
  for (auto k : order) {
    n2.push_back(nodes[k]);
    w2.push_back(weights[k]);
  }
  nodes = n2;
  weights = w2;
}

// log of (1 - ε) e^{-x} + ε
double log_slot_term(double eps, double x) {
  if (eps <= 0.0) return -x;
  if (eps >= 1.0) return 0.0;
  return log_add(std::log1p(-eps) - x, std::log(eps));
}

}  // namespace

std::size_t MuGrid::cell_of(double mu) const {
  const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, mu);
  return static_cast<std::size_t>(it - (edges.begin() + 1));
}

MuGrid make_mu_grid(const DerivedBudget& budget, std::size_t n_cells, bool shrink, int n_sub) {
  if (n_cells < 1) throw Error(Errc::InvalidParameter, "grid needs at least one cell");
  MuGrid g;
  std::vector<double> nodes;
  switch (n_sub) {
    case 1:
      nodes = {0.5};
      g.sub_weights = {1.0};
      break;
    case 2: unit_rule<2>(nodes, g.sub_weights); break;
    case 4: unit_rule<4>(nodes, g.sub_weights); break;
    case 8: unit_rule<8>(nodes, g.sub_weights); break;
    default: throw Error(Errc::InvalidParameter, "n_sub must be 1, 2, 4 or 8");
  }
  const double scale = budget.p_per_user * (shrink ? 1.0 - budget.sigma_e_sq : 1.0);
  const double m = budget.m;
  const auto q = [&](double p) { return scale * boost::math::gamma_p_inv(m, p); };
  const double n = static_cast<double>(n_cells);
  g.points.resize(n_cells);
  g.probs.assign(n_cells, 1.0 / n);
  g.edges.resize(n_cells + 1);
  g.edges.front() = 0.0;
  g.edges.back() = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < n_cells; ++i) g.edges[i] = q(static_cast<double>(i) / n);
  for (std::size_t i = 0; i < n_cells; ++i) g.points[i] = q((static_cast<double>(i) + 0.5) / n);
  g.sub_points.reserve(n_cells * nodes.size());
  for (std::size_t i = 0; i < n_cells; ++i)
    for (double u : nodes) g.sub_points.push_back(q((static_cast<double>(i) + u) / n));
  g.mu_max = q(1.0 - 1e-9);
  return g;
}

double mellin_ideal_series(int m, double rho, double s_tilde, double* condition) {
  if (m < 1 || !(rho > 0.0) || !(s_tilde >= 0.0)) throw Error(Errc::DomainError, "invalid Mellin arguments");
  const double x = 1.0 / rho;
  std::vector<double> logs(static_cast<std::size_t>(m));
  double top = -std::numeric_limits<double>::infinity();
  for (int l = 0; l < m; ++l) {
    const double log_binom = std::lgamma(m) - std::lgamma(l + 1.0) - std::lgamma(m - l);
    logs[l] = log_binom - std::lgamma(m) - (l + s_tilde) * std::log(rho) + x +
              log_upper_incomplete_gamma(m - l - s_tilde, x);
    top = std::max(top, logs[l]);
  }
  long double sum = 0.0L, abs_sum = 0.0L;
  for (int l = 0; l < m; ++l) {
    const long double t = std::exp(static_cast<long double>(logs[l] - top));
    sum += (l % 2 == 0) ? t : -t;
    abs_sum += t;
  }
  if (condition) *condition = sum != 0.0L ? static_cast<double>(abs_sum / std::fabs(sum)) : std::numeric_limits<double>::infinity();
  return static_cast<double>(sum) * std::exp(top);
}

double log_mellin_ideal_quadrature(int m, double rho, double s_tilde) {
  if (m < 1 || !(rho > 0.0) || !(s_tilde >= 0.0)) throw Error(Errc::DomainError, "invalid Mellin arguments");
  const auto g = [&](double xi) {
    if (xi <= 0.0) return m == 1 ? 0.0 : -std::numeric_limits<double>::infinity();
    return -s_tilde * std::log1p(rho * xi) + (m - 1) * std::log(xi) - xi;
  };
  // mode of the integrand: (m-1)/ξ = 1 + s̃ρ/(1+ρξ), bracketed in (0, m-1]
  double mode = 0.0;
  if (m > 1) {
    double lo = 0.0, hi = m - 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double d = (m - 1) / mid - 1.0 - s_tilde * rho / (1.0 + rho * mid);
      (d > 0.0 ? lo : hi) = mid;
    }
    mode = 0.5 * (lo + hi);
  }
  const double peak = g(mode);
  const auto f = [&](double xi) { return std::exp(g(xi) - peak); };
  double total = 0.0;
  if (mode > 0.0) {
    boost::math::quadrature::tanh_sinh<double> left;
    total += left.integrate(f, 0.0, mode, 1e-13);
  }
  boost::math::quadrature::exp_sinh<double> right;
  const auto shifted = [&](double u) { return f(mode + u); };
  total += right.integrate(shifted, 1e-13);
  return peak + std::log(total) - std::lgamma(m);
}

double log_mellin_ideal(const DerivedBudget& budget, double s) {
  const double st = s_tilde_of(budget, s);
  double cond = 0.0;
  const double series = mellin_ideal_series(budget.m, budget.p_per_user, st, &cond);
  if (cond < kSeriesConditionLimit && series > 0.0 && std::isfinite(series)) return std::log(series);
  return log_mellin_ideal_quadrature(budget.m, budget.p_per_user, st);
}

double mellin_ideal(const DerivedBudget& budget, double s) { return std::exp(log_mellin_ideal(budget, s)); }

double log_mellin_quantized(const MuGrid& grid, const RatePolicy& policy, const DerivedBudget& budget, double s) {
  if (policy.rates.size() != grid.size() || policy.errors.size() != grid.size())
    throw Error(Errc::PolicyGridMismatch, "policy and grid sizes differ");
  if (!(s > 0.0)) throw Error(Errc::DomainError, "s must be > 0");
  double acc = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = s * budget.n_data * policy.rates[i];
    acc = log_add(acc, std::log(grid.probs[i]) + log_slot_term(policy.errors[i], x));
  }
  return std::min(acc, 0.0);
}

double mellin_quantized(const MuGrid& grid, const RatePolicy& policy, const DerivedBudget& budget, double s) {
  return std::exp(log_mellin_quantized(grid, policy, budget, s));
}

double log_mellin_mixed(const GroupSplit& split, double log_a, double log_b) {
  const double pa = split.p_a.value();
  const double pb = split.p_b.value();
  if (pb == 0.0) return log_a;
  if (pa == 0.0) return log_b;
  return log_add(std::log(pa) + log_a, std::log(pb) + log_b);
}

double mellin_mixed(const GroupSplit& split, double mellin_a, double mellin_b) {
  return split.p_a.value() * mellin_a + split.p_b.value() * mellin_b;
}

double mean_rate_ideal(const DerivedBudget& budget) {
  const int m = budget.m;
  const double rho = budget.p_per_user;
  const auto f = [&](double xi) {
    return std::log2(1.0 + rho * xi) * std::exp((m - 1) * std::log(xi) - xi - std::lgamma(m));
  };
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(f, 1e-12);
}

double mean_rate_policy(const MuGrid& grid, const RatePolicy& policy) {
  if (policy.rates.size() != grid.size() || policy.errors.size() != grid.size())
    throw Error(Errc::PolicyGridMismatch, "policy and grid sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) acc += grid.probs[i] * (1.0 - policy.errors[i]) * policy.rates[i];
  return acc;
}

ServiceMellin ideal_service(const DerivedBudget& budget) {
  ServiceMellin out;
  out.tag = ServiceTag::Ideal;
  out.log_eval = [budget](double s) { return log_mellin_ideal(budget, s); };
  out.mean_bits = budget.n_data * mean_rate_ideal(budget);
  return out;
}

ServiceMellin quantized_service(const MuGrid& grid, const RatePolicy& policy, const DerivedBudget& budget) {
  ServiceMellin out;
  out.tag = ServiceTag::QuantizedPolicy;
  out.log_eval = [grid, policy, budget](double s) { return log_mellin_quantized(grid, policy, budget, s); };
  out.mean_bits = budget.n_data * mean_rate_policy(grid, policy);
  return out;
}

ServiceMellin mixed_service(const GroupSplit& split, ServiceMellin a, ServiceMellin b) {
  ServiceMellin out;
  out.tag = ServiceTag::MixedGroups;
  out.mean_bits = split.p_a.value() * a.mean_bits + split.p_b.value() * b.mean_bits;
  out.log_eval = [split, a = std::move(a), b = std::move(b)](double s) {
    if (split.p_b.num == 0) return a.log_eval(s);
    return log_mellin_mixed(split, a.log_eval(s), b.log_eval(s));
  };
  return out;
}

ServiceMellin memoized(ServiceMellin model) {
  struct Cache {
    std::mutex mutex;
    std::unordered_map<double, double> values;
  };
  auto cache = std::make_shared<Cache>();
  auto inner = std::move(model.log_eval);
  model.log_eval = [cache, inner = std::move(inner)](double s) {
    {
      std::lock_guard lock(cache->mutex);
      if (auto it = cache->values.find(s); it != cache->values.end()) return it->second;
    }
    const double v = inner(s);
    std::lock_guard lock(cache->mutex);
    cache->values.emplace(s, v);
    return v;
  };
  return model;
}

double expected_service(const ServiceMellin& model, int superframe_len) {
  if (superframe_len < 1) throw Error(Errc::InvalidParameter, "superframe length must be >= 1");
  return model.expected_service(superframe_len);
}

}  // namespace misodelay
