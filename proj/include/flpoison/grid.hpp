#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flpoison/config.hpp"
#include "flpoison/federation.hpp"

namespace flpoison {

// One (attack, defense) cell. Per-seed vectors are parallel to the grid's seeds.
struct GridCell {
  AttackTag attack = AttackTag::none;
  DefenseTag defense = DefenseTag::fedavg;
  std::vector<std::string> config_hashes;
  std::vector<double> training_scores;  // NaN where the experiment failed
  std::vector<double> backdoor_scores;
  std::vector<bool> diverged;
  std::vector<std::string> errors;  // empty string on success
  // Over the successful seeds; sample standard deviation (0 for one seed).
  double mean = 0.0;
  double stddev = 0.0;
  double backdoor_mean = 0.0;

  bool failed() const;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridResult {
  std::vector<AttackTag> attacks;
  std::vector<DefenseTag> defenses;
  std::vector<std::uint64_t> seeds;
  std::vector<GridCell> cells;  // attack-major

  const GridCell& cell(AttackTag attack, DefenseTag defense) const;
  bool any_failed() const;
  friend bool operator==(const GridResult&, const GridResult&) = default;
};

struct GridOptions {
  // Completed experiments are cached here as <config hash>.json. Empty disables caching.
  std::filesystem::path cache_dir;
  // Called after each experiment finishes or is loaded from the cache.
  std::function<void(const FederationConfig&, const ExperimentReport*, bool cached)> on_cell;
};

struct GridRun {
  GridResult result;
  std::vector<ExperimentReport> reports;  // successful experiments, cell order then seed order
  int experiments_run = 0;
  int cache_hits = 0;
};

// The config of one grid experiment: base with the attack and defense tags
// swapped in and all three seeds set to `seed`.
FederationConfig grid_cell_config(const FederationConfig& base, AttackTag attack, DefenseTag defense,
                                  std::uint64_t seed);

GridRun run_grid(const std::vector<AttackTag>& attacks, const std::vector<DefenseTag>& defenses,
                 const FederationConfig& base, const std::vector<std::uint64_t>& seeds, const GridOptions& options = {});

// Recomputes mean, stddev and backdoor_mean from the per-seed values.
void summarize_cell(GridCell& cell);

// Wide table: one row per attack, one column per defense, mean training score.
std::string grid_table_csv(const GridResult& grid);
// Long table with every per-seed value; together with the wide table it
// reproduces the GridResult exactly.
std::string grid_cells_csv(const GridResult& grid);
GridResult parse_grid_csv(const std::string& table_csv, const std::string& cells_csv);

// Human-readable table with mean ± std per cell.
std::string grid_pretty_table(const GridResult& grid);

struct GridArtifacts {
  std::filesystem::path table;       // grid.csv
  std::filesystem::path cells;       // grid_cells.csv
  std::filesystem::path rounds;      // rounds.jsonl (all experiments)
  std::filesystem::path trajectories;  // directory of <config hash>.csv
};
GridArtifacts emit_grid_reports(const GridRun& run, const std::filesystem::path& out_dir);

}  // namespace flpoison
