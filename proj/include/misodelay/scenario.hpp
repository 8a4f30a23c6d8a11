#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "misodelay/config.hpp"
#include "misodelay/delay_bound.hpp"
#include "misodelay/queue_sim.hpp"
#include "misodelay/rate_adaptation.hpp"

namespace misodelay {

inline constexpr std::string_view kVersion = "0.1.0";

std::uint64_t fnv1a64(std::string_view bytes);

struct AlphaSweep {
  std::vector<double> values;
  bool relative = true;  // values are fractions of the largest expected service
};

struct GridOptions {
  AdaptiveOptions adaptive;
  SSearchOptions s_search;
};

struct ValidateSpec {
  int k_sched = 5;
  double target_cap_bits = 6.0;
  double tol_bits = 0.01;
  std::uint64_t n_estimates = 100;
  std::uint64_t n_draws = 1'000'000;
  std::vector<double> rates;
};

struct SimulateSpec {
  std::uint64_t n_slots = 1'000'000;
  ServiceDrawMode mode = ServiceDrawMode::FullChannelMC;
  std::int64_t warmup_slots = -1;
  std::uint64_t replications = 1;
};

struct ScenarioConfig {
  SystemParams system;
  bool fixed_schedule = false;  // system.superframe_len given: no schedule scan
  std::vector<int> n_antennas;  // sweep axes; empty means the system value
  std::vector<double> p_uplink_db;
  std::vector<CsiMode> csi_modes;
  AlphaSweep alpha;
  GridOptions grids;
  std::optional<ValidateSpec> validate;
  std::optional<SimulateSpec> simulate;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::uint64_t hash = 0;  // of the canonical config text
};

/// Parses the JSON scenario. Unknown keys, type errors and invariant violations raise
/// Errc::ConfigError with the key path in the message.
ScenarioConfig parse_config(std::string_view json_text);
ScenarioConfig load_config(const std::string& path);

/// One point of the cross product n_antennas × p_uplink_db × csi_mode.
struct Variant {
  SystemParams params;
  double p_uplink_db = 0.0;
};

std::vector<Variant> expand_variants(const ScenarioConfig& cfg);

/// Runs fn(0..n-1) on `threads` workers; results must be written by index.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

struct ExpectedServiceRow {
  Variant variant;
  int superframe_len = 0;
  Ratio k_avg;
  double expected_service = 0.0;
};

struct PvRow {
  Variant variant;
  double alpha = 0.0;
  double alpha_fraction = 0.0;  // α / max E[S]
  ScheduleResult schedule;
};

struct AnalyzeOutput {
  std::vector<ExpectedServiceRow> expected_service;
  std::vector<PvRow> pv;
};

struct PoutRow {
  Variant variant;
  double rate = 0.0;
  double lower = 0.0, upper = 0.0, fbl_upper = 0.0;
  double mc_mean = 0.0, mc_stderr = 0.0;
  double mc_fbl_mean = 0.0, mc_fbl_stderr = 0.0;
  std::uint64_t n_estimates = 0, n_draws = 0;
};

struct SimRow {
  Variant variant;
  double alpha = 0.0;
  double alpha_fraction = 0.0;
  double pv_bound = 1.0;
  int superframe_len = 0;
  Ratio k_avg;
  ServiceDrawMode mode = ServiceDrawMode::FullChannelMC;
  std::uint64_t replication = 0;
  QueueTrace trace;
};

/// Expected service per candidate schedule and the optimized bound per α.
AnalyzeOutput run_analyze(const ScenarioConfig& cfg, unsigned threads = 1);
/// Conditioned Monte Carlo outage against the three bound functions.
std::vector<PoutRow> run_validate(const ScenarioConfig& cfg, unsigned threads = 1);
/// Queue simulation under the policy behind each α's bound.
std::vector<SimRow> run_simulate(const ScenarioConfig& cfg, unsigned threads = 1);

std::string csv_preamble(const ScenarioConfig& cfg);
void write_expected_service_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<ExpectedServiceRow>& rows);
void write_pv_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<PvRow>& rows);
void write_pout_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<PoutRow>& rows);
void write_sim_csv(std::ostream& out, const ScenarioConfig& cfg, const std::vector<SimRow>& rows);

std::string_view to_string(ServiceDrawMode mode);

}  // namespace misodelay
