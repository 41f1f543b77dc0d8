// partial_al: run experiment grids, simulate one cell, or re-rank summaries.
//
//   partial_al run      --config grid.json --out results [--threads N] [--af fim ...] [--charts]
//   partial_al simulate --config grid.json [--cell 0] [--trial 0] --af fim [--out dir]
//   partial_al rank     --out dir summary.csv [more summaries...]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "partial_al/experiment.hpp"

namespace fs = std::filesystem;
using namespace partial_al;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::vector<std::string> afs;
};

ExperimentGrid grid_from(const Common& c) {
  ExperimentGrid g = c.config.empty() ? ExperimentGrid{} : load_config(c.config);
  if (c.seed) g.base_seed = *c.seed;
  if (!c.afs.empty()) {
    std::vector<std::string> bad;
    g.afs.clear();
    for (const auto& name : c.afs) {
      try {
        g.afs.push_back(parse_acquisition(name));
      } catch (const std::invalid_argument& e) {
        bad.push_back("--af " + name + ": " + e.what());
      }
    }
    if (!bad.empty()) throw ConfigError(bad);
  }
  return g;
}

unsigned thread_count(unsigned requested) {
  if (const char* env = std::getenv("PARTIAL_AL_THREADS"); env && *env) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0) throw ConfigError({"PARTIAL_AL_THREADS: expected a positive integer"});
    return static_cast<unsigned>(v);
  }
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_run(const Common& c, bool charts) {
  const auto grid = grid_from(c);
  RunOptions opt;
  opt.threads = thread_count(c.threads);
  opt.charts = charts;
  opt.log = [](const std::string& m) { std::cerr << m << '\n'; };
  const auto cells = expand(grid);
  std::cerr << cells.size() << " cells x " << grid.afs.size() << " AFs x " << grid.trials
            << " trials on " << opt.threads << " thread(s)\n";
  const auto res = run_grid(grid, c.out, opt);
  std::cout << "af,mean_rank_ateer,mean_rank_mse\n";
  for (const auto& [af, r] : res.ranks.mean_rank_ateer) {
    std::cout << af << ',' << format_real(r) << ',' << format_real(res.ranks.mean_rank_mse.at(af)) << '\n';
  }
  if (!res.failed_cells.empty()) {
    std::cerr << res.failed_cells.size() << " cell(s) failed\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_simulate(const Common& c, int cell_index, int trial) {
  auto grid = grid_from(c);
  const auto cells = expand(grid);
  if (cell_index < 0 || static_cast<std::size_t>(cell_index) >= cells.size()) {
    throw ConfigError({"--cell: index out of range (grid has " + std::to_string(cells.size()) + " cells)"});
  }
  if (grid.afs.size() != 1) {
    throw ConfigError({"simulate: choose exactly one acquisition function with --af"});
  }
  const auto& cell = cells[static_cast<std::size_t>(cell_index)];
  const auto af = grid.afs.front();
  const auto wc = world_config(grid, cell, trial);
  ExperimentOptions eopt;
  eopt.ateer_horizon = grid.ateer_horizon;
  const auto trace = run_experiment(wc, af, eopt);

  std::printf("# %s af=%s trial=%d seed=%llu\n", cell.id().c_str(), std::string(to_string(af)).c_str(),
              trial, static_cast<unsigned long long>(wc.seed));
  std::printf("%5s %12s %10s %12s %12s %6s %4s %4s %4s\n", "cycle", "alpha_hat", "k_hat", "ateer",
              "mse", "n", "P1", "P2", "PT");
  for (const auto& r : trace.cycles) {
    std::printf("%5d %12.6g %10.6g %12.6g %12.6g %6zu %4d %4d %4d%s\n", r.cycle, r.estimate.alpha(),
                r.estimate.k(), r.ateer, r.mse, r.dataset_size, r.tests_run[0], r.tests_run[1],
                r.tests_run[2], r.fit_converged ? "" : "  (fit not converged)");
  }
  std::printf("# true alpha=%.6g k=%.6g\n", wc.true_params.alpha(), wc.true_params.k());

  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream t(fs::path(c.out) / "trace.csv", std::ios::binary);
    write_trace_csv(t, trace);
    std::ofstream s(fs::path(c.out) / "selections.csv", std::ios::binary);
    write_selection_csv(s, trace);
  }
  return kExitOk;
}

int cmd_rank(const Common& c, const std::vector<std::string>& inputs) {
  std::vector<SummaryRow> rows;
  for (const auto& p : inputs) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open '" + p + "'");
    auto part = read_summary_csv(in);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const auto table = rank_summary(rows);
  fs::create_directories(c.out);
  std::ofstream r(fs::path(c.out) / "ranks.csv", std::ios::binary);
  write_ranks_csv(r, table);
  std::ofstream m(fs::path(c.out) / "mean_ranks.csv", std::ios::binary);
  write_mean_ranks_csv(m, table);
  write_mean_ranks_csv(std::cout, table);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active learning of partial diagnostic test selection on simulated fleets"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON grid configuration (defaults apply when omitted)");
    sub->add_option("--seed", common.seed, "override base_seed");
    sub->add_option("--threads", common.threads, "worker threads (default: all cores)");
    sub->add_option("--af", common.afs, "acquisition function(s): random oldest likely_failure entropy fim");
  };

  bool charts = false;
  auto* run = app.add_subcommand("run", "run every grid cell x AF x trial");
  add_common(run);
  run->add_option("--out", common.out, "output directory")->required();
  run->add_flag("--charts", charts, "write an SVG line chart per trace");

  int cell = 0, trial = 0;
  auto* sim = app.add_subcommand("simulate", "run one cell and print the per-cycle trace");
  add_common(sim);
  sim->add_option("--out", common.out, "also write trace.csv and selections.csv here");
  sim->add_option("--cell", cell, "grid cell index")->capture_default_str();
  sim->add_option("--trial", trial, "trial index (selects the world seed)")->capture_default_str();

  std::vector<std::string> inputs;
  auto* rank = app.add_subcommand("rank", "aggregate summary.csv files into rank tables");
  rank->add_option("--out", common.out, "output directory")->required();
  rank->add_option("summaries", inputs, "summary.csv files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(common, charts);
    if (*sim) return cmd_simulate(common, cell, trial);
    return cmd_rank(common, inputs);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
