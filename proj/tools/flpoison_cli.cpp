// flpoison: run one federated experiment, an attack x defense grid, or
// inspect a saved report.
//
// Exit codes: 0 success, 2 validation error, 3 runtime error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flpoison/config.hpp"
#include "flpoison/grid.hpp"
#include "flpoison/kernels.hpp"
#include "flpoison/report.hpp"

namespace fs = std::filesystem;
using namespace flpoison;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct SeedOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::uint64_t> sample_seed;

  void apply(FederationConfig& config) const {
    if (seed) config = with_seed(config, *seed);
    if (data_seed) config.data_seed = *data_seed;
    if (train_seed) config.train_seed = *train_seed;
    if (sample_seed) config.sample_seed = *sample_seed;
  }
};

fs::path resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FLPOISON_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "out";
}

std::string join_ids(const std::vector<int>& ids) {
  if (ids.empty()) return "-";
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += std::to_string(id);
  }
  return out;
}

void print_scores(const ExperimentReport& report) {
  std::cout << "training_score " << format_double(report.training_score) << '\n';
  std::cout << "backdoor_score " << format_double(report.backdoor_score) << '\n';
  std::cout << "difference     " << format_double(report.backdoor_score - report.training_score) << '\n';
  if (report.partial_window) std::cout << "note: fewer rounds than the score window\n";
  if (report.diverged) std::cout << "note: diverged at round " << report.diverged_round << '\n';
}

int cmd_run(const std::string& config_path, const std::string& out_flag, const SeedOverrides& seeds, int verbosity) {
  ConfigFile file = load_config_file(config_path);
  seeds.apply(file.config);
  file.config.validate();
  const ExperimentReport report = run_experiment(file.config);
  const fs::path out_dir = resolve_out_dir(out_flag);
  const RunArtifacts paths = emit_reports(report, out_dir);
  if (verbosity > 0) {
    for (const auto& r : report.rounds) {
      std::cout << "round " << std::setw(3) << r.round << "  test " << format_double(r.test_loss) << "  backdoor "
                << format_double(r.backdoor_test_loss) << '\n';
    }
  }
  print_scores(report);
  std::cout << "report " << paths.report.string() << '\n';
  return kExitOk;
}

int cmd_grid(const std::string& config_path, const std::string& out_flag, const SeedOverrides& seeds,
             const std::vector<std::uint64_t>& seed_list, int verbosity) {
  ConfigFile file = load_config_file(config_path);
  if (!file.grid) throw ConfigError("grid", "the config has no grid section");
  GridSpec grid = *file.grid;
  if (!seed_list.empty()) grid.seeds = seed_list;
  if (seeds.seed) grid.seeds = {*seeds.seed};

  const fs::path out_dir = resolve_out_dir(out_flag);
  GridOptions options;
  options.cache_dir = out_dir / "cache";
  options.on_cell = [verbosity](const FederationConfig& config, const ExperimentReport* report, bool cached) {
    if (verbosity == 0) return;
    std::cerr << to_string(config.attack.tag) << '/' << to_string(config.defense.tag) << " seed "
              << config.data_seed << ": ";
    if (report == nullptr) {
      std::cerr << "failed\n";
    } else {
      std::cerr << format_double(report->training_score) << (cached ? " (cached)" : "") << '\n';
    }
  };
  const GridRun run = run_grid(grid.attacks, grid.defenses, file.config, grid.seeds, options);
  emit_grid_reports(run, out_dir);

  std::cout << grid_pretty_table(run.result);
  std::cout << "experiments run " << run.experiments_run << ", cached " << run.cache_hits << '\n';
  for (const GridCell& cell : run.result.cells) {
    for (std::size_t s = 0; s < cell.errors.size(); ++s) {
      if (!cell.errors[s].empty()) {
        std::cout << "error " << to_string(cell.attack) << '/' << to_string(cell.defense) << " seed "
                  << run.result.seeds[s] << ": " << cell.errors[s] << '\n';
      }
    }
  }
  return run.result.any_failed() ? kExitRuntime : kExitOk;
}

int cmd_inspect(const std::string& report_path) {
  const ExperimentReport report = read_report_file(report_path);
  const auto& c = report.config;
  std::cout << "attack " << to_string(c.attack.tag) << ", defense " << to_string(c.defense.tag) << ", rounds "
            << report.rounds.size() << '/' << c.rounds << ", config " << report.config_hash.substr(0, 12) << '\n';
  print_scores(report);
  std::cout << '\n'
            << std::left << std::setw(6) << "round" << std::setw(24) << "malicious sampled" << std::setw(24)
            << "excluded" << "bypassed\n";
  for (const auto& r : report.rounds) {
    std::vector<int> bypassed;
    for (int id : r.malicious_sampled) {
      if (std::find(r.excluded.begin(), r.excluded.end(), id) == r.excluded.end()) bypassed.push_back(id);
    }
    std::cout << std::setw(6) << r.round << std::setw(24) << join_ids(r.malicious_sampled) << std::setw(24)
              << join_ids(r.excluded) << join_ids(bypassed) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated poisoning experiments on synthetic road scenes"};
  app.require_subcommand(1);

  // CLI11 resets a shared target when a sibling subcommand is not used, so
  // each subcommand binds its own copy.
  struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    SeedOverrides seeds;
    int jobs = 0;
    int verbosity = 0;
  };
  CommonOptions run_opts;
  CommonOptions grid_opts;
  std::vector<std::uint64_t> seed_list;
  std::string report_path;

  auto add_common = [](CLI::App* sub, CommonOptions& o) {
    sub->add_option("-c,--config", o.config_path, "Config file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out-dir", o.out_dir, "Output directory (default $FLPOISON_OUT_DIR or ./out)");
    sub->add_option("--seed", o.seeds.seed, "Set data, train and sample seeds");
    sub->add_option("--data-seed", o.seeds.data_seed, "Override the data seed");
    sub->add_option("--train-seed", o.seeds.train_seed, "Override the training seed");
    sub->add_option("--sample-seed", o.seeds.sample_seed, "Override the sampling seed");
    sub->add_option("-j,--jobs", o.jobs, "Worker threads (default: all processors)")->check(CLI::NonNegativeNumber);
    sub->add_flag("-v,--verbose", o.verbosity, "Print progress");
  };

  CLI::App* run = app.add_subcommand("run", "Run one experiment and write its reports");
  add_common(run, run_opts);
  CLI::App* grid = app.add_subcommand("grid", "Run the attack x defense grid from the config's grid section");
  add_common(grid, grid_opts);
  grid->add_option("--seeds", seed_list, "Replace the grid's seed list");
  CLI::App* inspect = app.add_subcommand("inspect", "Summarize a report.json");
  inspect->add_option("report", report_path, "Report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  const CommonOptions& opts = grid->parsed() ? grid_opts : run_opts;
  if (opts.jobs > 0) kernels::set_thread_count(opts.jobs);

  try {
    if (run->parsed()) return cmd_run(opts.config_path, opts.out_dir, opts.seeds, opts.verbosity);
    if (grid->parsed()) return cmd_grid(opts.config_path, opts.out_dir, opts.seeds, seed_list, opts.verbosity);
    return cmd_inspect(report_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ReportError& e) {
    std::cerr << "report error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
