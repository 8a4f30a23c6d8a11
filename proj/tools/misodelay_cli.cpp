#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "misodelay/error.hpp"
#include "misodelay/scenario.hpp"

namespace fs = std::filesystem;
using namespace misodelay;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Overrides the config seed");
  cmd->add_option("--out", c.out, "Output directory (overrides output.dir)");
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
}

ScenarioConfig load(const Common& c) {
  auto cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.out_dir = *c.out;
  return cfg;
}

template <class Writer>
void emit(const ScenarioConfig& cfg, const std::string& name, Writer&& write) {
  fs::create_directories(cfg.out_dir);
  const auto path = fs::path(cfg.out_dir) / name;
  std::ofstream out(path);
  if (!out) throw Error(Errc::ConfigError, path.string() + ": cannot write");
  write(out);
  out.flush();
  if (!out) throw Error(Errc::ConfigError, path.string() + ": write failed");
  std::cerr << "wrote " << path.string() << '\n';
}

void analyze(const ScenarioConfig& cfg, unsigned threads) {
  const auto res = run_analyze(cfg, threads);
  emit(cfg, "expected_service.csv", [&](std::ostream& o) { write_expected_service_csv(o, cfg, res.expected_service); });
  emit(cfg, "pv_vs_alpha.csv", [&](std::ostream& o) { write_pv_csv(o, cfg, res.pv); });
}

void validate(const ScenarioConfig& cfg, unsigned threads) {
  const auto rows = run_validate(cfg, threads);
  emit(cfg, "pout_vs_rate.csv", [&](std::ostream& o) { write_pout_csv(o, cfg, rows); });
}

void simulate(const ScenarioConfig& cfg, unsigned threads) {
  const auto rows = run_simulate(cfg, threads);
  emit(cfg, "pv_sim_vs_alpha.csv", [&](std::ostream& o) { write_sim_csv(o, cfg, rows); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay-violation bounds for multiuser MISO downlinks with imperfect CSI"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common c;
  auto* a = app.add_subcommand("analyze", "Expected service per schedule and the optimized bound per arrival rate");
  auto* v = app.add_subcommand("validate", "Conditioned Monte Carlo outage against the analytic bounds");
  auto* s = app.add_subcommand("simulate", "Queue simulation against the analytic bound");
  auto* w = app.add_subcommand("sweep", "Every analysis the config has sections for");
  for (auto* cmd : {a, v, s, w}) add_common(cmd, c);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load(c);
    if (a->parsed()) analyze(cfg, c.threads);
    if (v->parsed()) validate(cfg, c.threads);
    if (s->parsed()) simulate(cfg, c.threads);
    if (w->parsed()) {
      analyze(cfg, c.threads);
      if (cfg.validate) validate(cfg, c.threads);
      if (cfg.simulate) simulate(cfg, c.threads);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
