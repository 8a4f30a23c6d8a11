#include "misodelay/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "misodelay/error.hpp"
#include "misodelay/outage_bounds.hpp"
#include "misodelay/phy_mc.hpp"

namespace misodelay {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) { throw Error(Errc::ConfigError, path + ": " + why); }

// Typed access to one JSON object; finish() rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (has(key)) out = convert<T>(j_.at(key), at(key));
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), at(key));
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) fail(at(item.key()), "unknown key");
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<std::int64_t>() < 0 && !v.is_number_unsigned()) fail(path, "expected a nonnegative integer");
      }
      return v.get<T>();
    } else {
      if (!v.is_number()) fail(path, "expected a number");
      return v.get<T>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

CsiMode parse_mode(const std::string& s, const std::string& path) {
  for (auto m : {CsiMode::Ideal, CsiMode::ImperfectCsi, CsiMode::ImperfectCsiFiniteBlocklength})
    if (s == to_string(m)) return m;
  fail(path, "unknown csi mode '" + s + "' (ideal, imperfect_csi, imperfect_csi_fbl)");
}

// Either a list of numbers or {"from", "to", "steps"} (steps points, endpoints included).
std::vector<double> number_list(const json& v, const std::string& path) {
  std::vector<double> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(Section::convert<double>(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }
  Section r(v, path);
  double from = 0.0, to = 0.0;
  int steps = 0;
  if (!r.has("from") || !r.has("to") || !r.has("steps")) fail(path, "a range needs from, to and steps");
  r.get("from", from);
  r.get("to", to);
  r.get("steps", steps);
  r.finish();
  if (steps < 0) fail(path + ".steps", "must be >= 0");
  for (int k = 0; k < steps; ++k) out.push_back(steps == 1 ? from : from + (to - from) * k / (steps - 1));
  return out;
}

// "<name>_db" or "<name>" (linear), not both.
void power(Section& s, const std::string& name, double& linear) {
  const bool db = s.has(name + "_db"), lin = s.has(name);
  if (db && lin) fail(s.at(name), "give either " + name + " or " + name + "_db");
  if (db) linear = db_to_linear(Section::convert<double>(s.raw(name + "_db"), s.at(name + "_db")));
  if (lin) linear = Section::convert<double>(s.raw(name), s.at(name));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string variant_cols(const Variant& v) {
  return std::to_string(v.params.n_antennas) + ',' + fmt(v.p_uplink_db) + ',' + std::string(to_string(v.params.csi_mode));
}

constexpr const char* kVariantHeader = "n_antennas,p_uplink_db,csi_mode";

std::vector<ScheduleCandidate> candidates_for(const ScenarioConfig& cfg, const SystemParams& p,
                                              const ServiceBuilder& builder) {
  if (!cfg.fixed_schedule) return schedule_candidates(p, builder);
  const auto split = superframe_partition(p);
  return {{p.superframe_len, split, builder(p, split)}};
}

double alpha_of(const AlphaSweep& a, std::size_t i, double es_max) {
  return a.relative ? a.values[i] * es_max : a.values[i];
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view to_string(ServiceDrawMode mode) {
  return mode == ServiceDrawMode::AnalyticEps ? "analytic_eps" : "full_channel";
}

ScenarioConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("config", std::string("invalid JSON: ") + e.what());
  }
  ScenarioConfig cfg;
  cfg.hash = fnv1a64(root.dump());
  Section top(root, "config");

  if (top.has("system")) {
    auto s = top.sub("system");
    auto& p = cfg.system;
    s.get("n_antennas", p.n_antennas);
    s.get("n_users_total", p.n_users_total);
    if (s.has("superframe_len")) {
      s.get("superframe_len", p.superframe_len);
      cfg.fixed_schedule = true;
    }
    s.get("n_slot_symbols", p.n_slot_symbols);
    s.get("n_ul_train", p.n_ul_train);
    s.get("n_dl_train", p.n_dl_train);
    power(s, "p_total", p.p_total);
    power(s, "p_uplink", p.p_uplink);
    s.get("arrival_rate", p.arrival_rate);
    s.get("deadline", p.deadline);
    if (s.has("csi_mode")) p.csi_mode = parse_mode(Section::convert<std::string>(s.raw("csi_mode"), s.at("csi_mode")), s.at("csi_mode"));
    s.finish();
  }

  bool alpha_given = false;
  if (top.has("sweep")) {
    auto s = top.sub("sweep");
    if (s.has("n_antennas"))
      for (double v : number_list(s.raw("n_antennas"), s.at("n_antennas"))) {
        if (v != std::floor(v) || v < 1) fail(s.at("n_antennas"), "entries must be positive integers");
        cfg.n_antennas.push_back(static_cast<int>(v));
      }
    if (s.has("p_uplink_db")) cfg.p_uplink_db = number_list(s.raw("p_uplink_db"), s.at("p_uplink_db"));
    if (s.has("csi_modes")) {
      const auto& arr = s.raw("csi_modes");
      if (!arr.is_array()) fail(s.at("csi_modes"), "expected a list");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto path = s.at("csi_modes") + "[" + std::to_string(i) + "]";
        cfg.csi_modes.push_back(parse_mode(Section::convert<std::string>(arr[i], path), path));
      }
    }
    if (s.has("alpha")) {
      auto a = s.sub("alpha");
      a.get("relative", cfg.alpha.relative);
      const bool values = a.has("values"), range = a.has("range");
      if (values == range) fail(s.at("alpha"), "give exactly one of values or range");
      cfg.alpha.values = number_list(a.raw(values ? "values" : "range"), a.at(values ? "values" : "range"));
      a.finish();
      for (double v : cfg.alpha.values)
        if (!(v >= 0.0)) fail(s.at("alpha"), "arrival rates must be >= 0");
      alpha_given = true;
    }
    s.finish();
  }
  if (!alpha_given && cfg.system.arrival_rate > 0.0) cfg.alpha = {{cfg.system.arrival_rate}, false};

  if (top.has("grids")) {
    auto s = top.sub("grids");
    auto& a = cfg.grids.adaptive;
    auto& ss = cfg.grids.s_search;
    s.get("n_mu", a.n_mu);
    s.get("n_rates", a.n_rates);
    s.get("n_sub", a.n_sub);
    s.get("shrink", a.shrink);
    s.get("s_lo", ss.s_lo);
    s.get("s_hi", ss.s_hi);
    s.get("s_points", ss.n_grid);
    s.finish();
    if (a.n_mu < 1) fail(s.at("n_mu"), "must be >= 1");
    if (a.n_rates < 2) fail(s.at("n_rates"), "must be >= 2");
    if (a.n_sub != 1 && a.n_sub != 2 && a.n_sub != 4 && a.n_sub != 8) fail(s.at("n_sub"), "must be 1, 2, 4 or 8");
    if (!(ss.s_lo > 0.0 && ss.s_hi > ss.s_lo)) fail(s.at("s_lo"), "need 0 < s_lo < s_hi");
    if (ss.n_grid < 2) fail(s.at("s_points"), "must be >= 2");
  }

  if (top.has("validate")) {
    auto s = top.sub("validate");
    ValidateSpec v;
    s.get("k_sched", v.k_sched);
    s.get("target_cap_bits", v.target_cap_bits);
    s.get("tol_bits", v.tol_bits);
    s.get("n_estimates", v.n_estimates);
    s.get("n_draws", v.n_draws);
    if (s.has("rates")) v.rates = number_list(s.raw("rates"), s.at("rates"));
    s.finish();
    if (v.n_draws < 1) fail(s.at("n_draws"), "must be >= 1");
    if (v.n_estimates < 1) fail(s.at("n_estimates"), "must be >= 1");
    if (!(v.tol_bits > 0.0)) fail(s.at("tol_bits"), "must be > 0");
    if (v.k_sched < 1) fail(s.at("k_sched"), "must be >= 1");
    for (double r : v.rates)
      if (!(r >= 0.0)) fail(s.at("rates"), "rates must be >= 0");
    if (!std::is_sorted(v.rates.begin(), v.rates.end())) fail(s.at("rates"), "rates must be nondecreasing");
    cfg.validate = v;
  }

  if (top.has("simulate")) {
    auto s = top.sub("simulate");
    SimulateSpec v;
    s.get("n_slots", v.n_slots);
    s.get("warmup_slots", v.warmup_slots);
    s.get("replications", v.replications);
    if (s.has("mode")) {
      const auto m = Section::convert<std::string>(s.raw("mode"), s.at("mode"));
      if (m == "analytic_eps") v.mode = ServiceDrawMode::AnalyticEps;
      else if (m == "full_channel") v.mode = ServiceDrawMode::FullChannelMC;
      else fail(s.at("mode"), "expected analytic_eps or full_channel");
    }
    s.finish();
    if (v.n_slots < 1) fail(s.at("n_slots"), "must be >= 1");
    if (v.replications < 1) fail(s.at("replications"), "must be >= 1");
    if (v.warmup_slots < -1) fail(s.at("warmup_slots"), "must be >= -1");
    cfg.simulate = v;
  }

  top.get("seed", cfg.seed);
  if (top.has("output")) {
    auto s = top.sub("output");
    s.get("dir", cfg.out_dir);
    s.finish();
  }
  top.finish();

  for (const auto& v : expand_variants(cfg)) {
    try {
      v.params.validate();
      if (cfg.fixed_schedule) {
        superframe_partition(v.params);
        deadline_partition(v.params.deadline, v.params.superframe_len);
      }
    } catch (const Error& e) {
      fail("config.system", e.what());
    }
  }
  if (cfg.validate) {
    for (const auto& v : expand_variants(cfg)) {
      try {
        derive_budget(v.params, cfg.validate->k_sched);
      } catch (const Error& e) {
        fail("config.validate.k_sched", e.what());
      }
    }
  }
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<Variant> expand_variants(const ScenarioConfig& cfg) {
  const auto nts = cfg.n_antennas.empty() ? std::vector<int>{cfg.system.n_antennas} : cfg.n_antennas;
  const auto puls = cfg.p_uplink_db.empty() ? std::vector<double>{10.0 * std::log10(cfg.system.p_uplink)} : cfg.p_uplink_db;
  const auto modes = cfg.csi_modes.empty() ? std::vector<CsiMode>{cfg.system.csi_mode} : cfg.csi_modes;
  std::vector<Variant> out;
  for (int nt : nts)
    for (double pul : puls)
      for (auto mode : modes) {
        Variant v;
        v.params = cfg.system;
        v.params.n_antennas = nt;
        v.params.p_uplink = db_to_linear(pul);
        v.params.csi_mode = mode;
        v.p_uplink_db = pul;
        out.push_back(v);
      }
  return out;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const unsigned n_workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  for (unsigned w = 0; w < n_workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

AnalyzeOutput run_analyze(const ScenarioConfig& cfg, unsigned threads) {
  AnalyzeOutput out;
  for (const auto& v : expand_variants(cfg)) {
    const auto builder = v.params.csi_mode == CsiMode::Ideal ? ideal_builder() : adaptive_builder(cfg.grids.adaptive);
    const auto cands = candidates_for(cfg, v.params, builder);
    for (const auto& c : cands)
      out.expected_service.push_back({v, c.superframe_len, c.split.k_avg, c.service.expected_service(c.superframe_len)});
    if (cfg.alpha.values.empty()) continue;
    const auto& best = max_expected_service(cands);
    const double es_max = best.service.expected_service(best.superframe_len);
    std::vector<PvRow> rows(cfg.alpha.values.size());
    parallel_for(rows.size(), threads, [&](std::size_t i) {
      auto p = v.params;
      p.arrival_rate = alpha_of(cfg.alpha, i, es_max);
      rows[i] = {v, p.arrival_rate, p.arrival_rate / es_max, optimize_schedule(p, cands, cfg.grids.s_search)};
    });
    out.pv.insert(out.pv.end(), rows.begin(), rows.end());
  }
  return out;
}

std::vector<PoutRow> run_validate(const ScenarioConfig& cfg, unsigned threads) {
  if (!cfg.validate) throw Error(Errc::ConfigError, "config: validate section missing");
  const auto& spec = *cfg.validate;
  const std::size_t nr = spec.rates.size();
  std::vector<PoutRow> out;
  for (const auto& v : expand_variants(cfg)) {
    const auto budget = derive_budget(v.params, spec.k_sched);
    EstimateOptions eo;
    eo.shrink = cfg.grids.adaptive.shrink;
    // per estimate: lower, upper, fbl_upper, outage, fbl error at every rate
    std::vector<std::vector<double>> per(spec.n_estimates, std::vector<double>(5 * nr));
    parallel_for(spec.n_estimates, threads, [&](std::size_t e) {
      Rng rng = Rng(cfg.seed).substream(e);
      ChannelEstimate est;
      try {
        est = conditioned_estimate(budget, v.params.n_antennas, spec.target_cap_bits, spec.tol_bits, rng, eo);
      } catch (const Error& err) {
        throw Error(err.code(), "estimate " + std::to_string(e) + ": " + err.what());
      }
      const auto inf = make_estimate_stats(budget, est.mu, false);
      const auto fbl = make_estimate_stats(budget, est.mu, true);
      const auto curves = empirical_curves(est, budget, spec.rates, spec.n_draws, rng, true);
      auto& row = per[e];
      for (std::size_t i = 0; i < nr; ++i) {
        row[i] = pout_lower(inf, spec.rates[i]);
        row[nr + i] = pout_upper(inf, spec.rates[i]);
        row[2 * nr + i] = fbl_error_upper(fbl, spec.rates[i]);
        row[3 * nr + i] = curves.outage[i];
        row[4 * nr + i] = curves.fbl_error[i];
      }
    });
    const double n = static_cast<double>(spec.n_estimates);
    const auto mean_sd = [&](std::size_t col) {
      double m = 0.0, m2 = 0.0;
      for (const auto& r : per) m += r[col];
      m /= n;
      for (const auto& r : per) m2 += (r[col] - m) * (r[col] - m);
      const double se = spec.n_estimates > 1 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0;
      return std::make_pair(m, se);
    };
    for (std::size_t i = 0; i < nr; ++i) {
      PoutRow r;
      r.variant = v;
      r.rate = spec.rates[i];
      r.lower = mean_sd(i).first;
      r.upper = mean_sd(nr + i).first;
      r.fbl_upper = mean_sd(2 * nr + i).first;
      std::tie(r.mc_mean, r.mc_stderr) = mean_sd(3 * nr + i);
      std::tie(r.mc_fbl_mean, r.mc_fbl_stderr) = mean_sd(4 * nr + i);
      r.n_estimates = spec.n_estimates;
      r.n_draws = spec.n_draws;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<SimRow> run_simulate(const ScenarioConfig& cfg, unsigned threads) {
  if (!cfg.simulate) throw Error(Errc::ConfigError, "config: simulate section missing");
  const auto& spec = *cfg.simulate;
  std::vector<SimRow> out;
  for (const auto& v : expand_variants(cfg)) {
    if (cfg.alpha.values.empty()) continue;
    const bool ideal = v.params.csi_mode == CsiMode::Ideal;
    auto cache = std::make_shared<AdaptiveCache>(cfg.grids.adaptive);
    const auto builder = ideal ? ideal_builder() : adaptive_builder(cache);
    const auto cands = candidates_for(cfg, v.params, builder);
    const auto& best = max_expected_service(cands);
    const double es_max = best.service.expected_service(best.superframe_len);
    const std::size_t na = cfg.alpha.values.size();
    std::vector<ScheduleResult> bounds(na);
    parallel_for(na, threads, [&](std::size_t i) {
      auto p = v.params;
      p.arrival_rate = alpha_of(cfg.alpha, i, es_max);
      bounds[i] = optimize_schedule(p, cands, cfg.grids.s_search);
    });
    std::vector<SimRow> rows(na * spec.replications);
    parallel_for(rows.size(), threads, [&](std::size_t k) {
      const std::size_t i = k / spec.replications;
      const std::uint64_t rep = k % spec.replications;
      const auto& b = bounds[i];
      const double alpha = alpha_of(cfg.alpha, i, es_max);
      QueueSimConfig qc;
      qc.n_antennas = v.params.n_antennas;
      qc.n_users_total = v.params.n_users_total;
      qc.superframe_len = b.superframe_len;
      qc.deadline = v.params.deadline;
      qc.split = b.split;
      qc.mode = spec.mode;
      qc.finite_blocklength = v.params.csi_mode == CsiMode::ImperfectCsiFiniteBlocklength;
      qc.warmup_slots = spec.warmup_slots;
      const auto group = [&](int users) {
        if (ideal) return ideal_group(derive_budget(v.params, users));
        const auto svc = cache->get(v.params, users);
        return policy_group(svc->budget(), svc->grid(),
                            b.bound.stable ? svc->policy_at(b.bound.s_star) : svc->throughput());
      };
      qc.group_a = group(b.split.k_a);
      if (!b.split.degenerate()) qc.group_b = group(b.split.k_b);
      // the same stream for every α: identical schedules see identical channels
      Rng rng(cfg.seed, rep);
      auto trace = simulate_queue(qc, alpha, spec.n_slots, rng);
      trace.seed = cfg.seed;
      rows[k] = {v, alpha, alpha / es_max, b.bound.pv_bound, b.superframe_len, b.split.k_avg, spec.mode, rep, trace};
    });
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::string csv_preamble(const ScenarioConfig& cfg) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "# misodelay %s config_hash=%016" PRIx64 "\n", std::string(kVersion).c_str(), cfg.hash);
  return buf;
}

void write_expected_service_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<ExpectedServiceRow>& rows) {
  out << csv_preamble(cfg) << kVariantHeader << ",superframe_len,k_avg,expected_service\n";
  for (const auto& r : rows)
    out << variant_cols(r.variant) << ',' << r.superframe_len << ',' << fmt(r.k_avg.value()) << ','
        << fmt(r.expected_service) << '\n';
}

void write_pv_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<PvRow>& rows) {
  out << csv_preamble(cfg) << kVariantHeader << ",alpha,alpha_fraction,pv_bound,s_star,k_avg,superframe_len,stable\n";
  for (const auto& r : rows)
    out << variant_cols(r.variant) << ',' << fmt(r.alpha) << ',' << fmt(r.alpha_fraction) << ','
        << fmt(r.schedule.bound.pv_bound) << ',' << fmt(r.schedule.bound.s_star) << ',' << fmt(r.schedule.split.k_avg.value())
        << ',' << r.schedule.superframe_len << ',' << (r.schedule.bound.stable ? 1 : 0) << '\n';
}

void write_pout_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<PoutRow>& rows) {
  out << csv_preamble(cfg) << kVariantHeader
      << ",rate,lower,upper,fbl_upper,mc_mean,mc_stderr,mc_fbl_mean,mc_fbl_stderr,n_estimates,n_draws\n";
  for (const auto& r : rows)
    out << variant_cols(r.variant) << ',' << fmt(r.rate) << ',' << fmt(r.lower) << ',' << fmt(r.upper) << ','
        << fmt(r.fbl_upper) << ',' << fmt(r.mc_mean) << ',' << fmt(r.mc_stderr) << ',' << fmt(r.mc_fbl_mean) << ','
        << fmt(r.mc_fbl_stderr) << ',' << r.n_estimates << ',' << r.n_draws << '\n';
}

void write_sim_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<SimRow>& rows) {
  out << csv_preamble(cfg) << kVariantHeader
      << ",alpha,alpha_fraction,pv_hat,stderr,pv_bound,violations,measured,max_delay,superframe_len,k_avg,mode,slots,"
         "replication,seed\n";
  for (const auto& r : rows)
    out << variant_cols(r.variant) << ',' << fmt(r.alpha) << ',' << fmt(r.alpha_fraction) << ',' << fmt(r.trace.pv_hat)
        << ',' << fmt(r.trace.stderr_pv()) << ',' << fmt(r.pv_bound) << ',' << r.trace.violations << ','
        << r.trace.measured << ',' << r.trace.max_delay_seen << ',' << r.superframe_len << ','
        << fmt(r.k_avg.value()) << ',' << to_string(r.mode) << ',' << r.trace.n_slots << ',' << r.replication << ','
        << r.trace.seed << '\n';
}

}  // namespace misodelay
