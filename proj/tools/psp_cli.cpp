// Batch front end: nominal planning, disturbance simulation, policy-table
// builds, recoverability estimates and terrain generation, driven by JSON
// scenario files. Exit codes: 0 success, 2 unrecoverable scenario, 3 config
// or usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "psp/automaton.hpp"
#include "psp/manifold.hpp"
#include "psp/recovery.hpp"
#include "psp/scenario.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::vector<std::string> scenarios;
  std::uint64_t seed{0};
  bool seed_set{false};
  std::string out{"."};
  int jobs{1};
  std::string table_cache;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool need_scenario) {
  auto* opt = cmd->add_option("--scenario", args.scenarios, "scenario JSON file(s)");
  if (need_scenario) opt->required();
  cmd->add_option("--seed", args.seed, "override the scenario seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--jobs", args.jobs, "parallel scenario executions")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--table-cache", args.table_cache,
                  "policy-table cache directory (env PSP_TABLE_CACHE)");
}

fs::path cache_dir(const CommonArgs& args) {
  if (!args.table_cache.empty()) return args.table_cache;
  if (const char* env = std::getenv("PSP_TABLE_CACHE")) return env;
  return {};
}

psp::Scenario load(const std::string& path, const CommonArgs& args) {
  psp::Scenario scn = psp::load_scenario(path);
  if (args.seed_set) {
    scn.seed = args.seed;
    if (scn.terrain) scn.terrain->seed = args.seed;
  }
  return scn;
}

fs::path out_path(const CommonArgs& args, const psp::Scenario& scn, const char* suffix) {
  fs::create_directories(args.out);
  const std::string base = scn.name.empty() ? "scenario" : scn.name;
  return fs::path(args.out) / (base + suffix);
}

// Runs `work` over every scenario path, optionally in parallel; collects the
// worst exit code.
int for_each_scenario(const CommonArgs& args, int (*work)(const std::string&, const CommonArgs&)) {
  if (args.scenarios.size() <= 1 || args.jobs <= 1) {
    int rc = 0;
    for (const std::string& s : args.scenarios) rc = std::max(rc, work(s, args));
    return rc;
  }
  std::vector<int> codes(args.scenarios.size(), 0);
  std::vector<std::thread> pool;
  std::size_t next = 0;
  for (int w = 0; w < args.jobs; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < args.scenarios.size(); i += args.jobs) {
        codes[i] = work(args.scenarios[i], args);
      }
    });
  }
  for (auto& th : pool) th.join();
  int rc = 0;
  for (int c : codes) rc = std::max(rc, c);
  return rc;
}

int do_plan(const std::string& path, const CommonArgs& args) {
  const psp::Scenario scn = load(path, args);
  const psp::StepPlan plan = psp::plan_scenario(scn);
  const fs::path out = out_path(args, scn, ".plan.csv");
  psp::write_plan_csv(plan, out, scn);
  std::cout << scn.name << ": " << plan.steps.size() << " steps, "
            << plan.transitions.size() << " transitions -> " << out.string() << "\n";
  return 0;
}

int do_simulate(const std::string& path, const CommonArgs& args) {
  const psp::Scenario scn = load(path, args);
  psp::AutomatonConfig cfg;
  cfg.table_cache = cache_dir(args);
  try {
    const psp::ExecutionTrace trace = psp::simulate_scenario(scn, cfg);
    const fs::path out = out_path(args, scn, ".trace.csv");
    psp::write_trace_csv(trace, out, scn);
    std::cout << scn.name << ": " << trace.trace.size() << " samples, "
              << trace.replans.size() << " replans -> " << out.string() << "\n";
    return 0;
  } catch (const psp::UnrecoverableError& e) {
    const fs::path out = out_path(args, scn, ".trace.partial.csv");
    psp::write_trace_csv(e.trace, out, scn);
    std::cerr << scn.name << ": unrecoverable: " << e.what() << " (partial trace -> "
              << out.string() << ")\n";
    return 2;
  }
}

int do_bundle(const std::string& path, const CommonArgs& args) {
  const psp::Scenario scn = load(path, args);
  psp::DpConfig dp;
  const psp::PolicyTable table =
      cache_dir(args).empty()
          ? psp::build_policy_table(dp)
          : psp::load_or_build(dp, cache_dir(args) / "default.pt");
  const double eps = scn.epsilon > 0.0
                         ? scn.epsilon
                         : psp::default_epsilon(dp.apex_velocity, dp.omega_ref);
  const psp::RecoverabilityEstimate est = psp::estimate_recoverability_bundle(table, eps);
  const fs::path out = out_path(args, scn, ".bundle.csv");
  std::ofstream os(out, std::ios::binary | std::ios::trunc);
  os << "stage_m,v_lo_mps,v_hi_mps\n";
  for (int n = 0; n < table.config.stage_count(); ++n) {
    for (const psp::VelocityInterval& iv : est.intervals[n]) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n",
                    table.config.stage_position(n), iv.v_lo, iv.v_hi);
      os << buf;
    }
  }
  std::cout << scn.name << ": bundle estimate -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phase-space locomotion planning and robust control"};
  app.require_subcommand(1);

  CommonArgs plan_args, sim_args, table_args, bundle_args, terr_args;

  CLI::App* plan = app.add_subcommand("plan", "emit the nominal step plan");
  add_common(plan, plan_args, true);

  CLI::App* sim = app.add_subcommand("simulate", "execute the plan under disturbances");
  add_common(sim, sim_args, true);

  CLI::App* table = app.add_subcommand("dp-table", "build and cache the recovery policy table");
  add_common(table, table_args, false);

  CLI::App* bundle = app.add_subcommand("bundle", "emit the recoverability estimate");
  add_common(bundle, bundle_args, true);

  CLI::App* terr = app.add_subcommand("terrain", "generate a rough-terrain profile");
  add_common(terr, terr_args, false);
  int terr_steps = 100;
  double dh_min = 0.1, dh_max = 0.3, tilt = 0.17453292519943295, step_len = 0.4;
  terr->add_option("--steps", terr_steps, "number of steps");
  terr->add_option("--dh-min", dh_min, "minimum |height increment| [m]");
  terr->add_option("--dh-max", dh_max, "maximum |height increment| [m]");
  terr->add_option("--tilt", tilt, "surface pitch magnitude [rad]");
  terr->add_option("--step-length", step_len, "sagittal step length [m]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) return for_each_scenario(plan_args, do_plan);
    if (sim->parsed()) return for_each_scenario(sim_args, do_simulate);
    if (bundle->parsed()) return for_each_scenario(bundle_args, do_bundle);
    if (table->parsed()) {
      psp::DpConfig dp;
      const fs::path cache = cache_dir(table_args);
      if (cache.empty()) {
        const psp::PolicyTable t = psp::build_policy_table(dp);
        fs::create_directories(table_args.out);
        const fs::path out = fs::path(table_args.out) / "policy.pt";
        psp::save_policy_table(t, out);
        std::cout << "policy table (" << t.cells.size() << " cells) -> " << out.string()
                  << "\n";
      } else {
        const psp::PolicyTable t = psp::load_or_build(dp, cache / "default.pt");
        std::cout << "policy table (" << t.cells.size() << " cells) cached in "
                  << cache.string() << "\n";
      }
      return 0;
    }
    if (terr->parsed()) {
      const psp::Terrain t = psp::generate_terrain(terr_args.seed, terr_steps, dh_min,
                                                   dh_max, tilt, step_len);
      fs::create_directories(terr_args.out);
      const fs::path out = fs::path(terr_args.out) / "terrain.csv";
      std::ofstream os(out, std::ios::binary | std::ios::trunc);
      os << "step,x_m,height_m,tilt_rad\n";
      for (std::size_t k = 0; k < t.heights.size(); ++k) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", k, k * t.step_length,
                      t.heights[k], t.tilts[k]);
        os << buf;
      }
      std::cout << t.heights.size() << " terrain steps -> " << out.string() << "\n";
      return 0;
    }
  } catch (const psp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const psp::Unrecoverable& e) {
    std::cerr << "unrecoverable: " << e.what() << "\n";
    return 2;
  } catch (const psp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
