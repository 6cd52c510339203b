#include "flpoison/grid.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "flpoison/report.hpp"

namespace flpoison {

namespace fs = std::filesystem;

namespace {

// Keeps error text on one CSV cell.
std::string sanitize(std::string text) {
  for (char& ch : text) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return text;
}

bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

struct Job {
  std::size_t cell = 0;
  std::size_t seed_index = 0;
  FederationConfig config;
  std::string hash;
  std::string error;
  std::optional<ExperimentReport> report;
  bool cached = false;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

bool GridCell::failed() const {
  return std::any_of(errors.begin(), errors.end(), [](const std::string& e) { return !e.empty(); });
}

const GridCell& GridResult::cell(AttackTag attack, DefenseTag defense) const {
  for (const auto& c : cells) {
    if (c.attack == attack && c.defense == defense) return c;
  }
  throw std::out_of_range("grid has no cell " + to_string(attack) + "/" + to_string(defense));
}

bool GridResult::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const GridCell& c) { return c.failed(); });
}

FederationConfig grid_cell_config(const FederationConfig& base, AttackTag attack, DefenseTag defense,
                                  std::uint64_t seed) {
  FederationConfig config = with_seed(base, seed);
  config.attack.tag = attack;
  config.defense.tag = defense;
  return config;
}

void summarize_cell(GridCell& cell) {
  std::vector<double> ok;
  double backdoor_sum = 0.0;
  for (std::size_t s = 0; s < cell.training_scores.size(); ++s) {
    if (!cell.errors[s].empty()) continue;
    ok.push_back(cell.training_scores[s]);
    backdoor_sum += cell.backdoor_scores[s];
  }
  if (ok.empty()) {
    cell.mean = cell.stddev = cell.backdoor_mean = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double sum = 0.0;
  for (double v : ok) sum += v;
  const auto n = static_cast<double>(ok.size());
  cell.mean = sum / n;
  cell.backdoor_mean = backdoor_sum / n;
  double ss = 0.0;
  for (double v : ok) ss += (v - cell.mean) * (v - cell.mean);
  cell.stddev = ok.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

GridRun run_grid(const std::vector<AttackTag>& attacks, const std::vector<DefenseTag>& defenses,
                 const FederationConfig& base, const std::vector<std::uint64_t>& seeds, const GridOptions& options) {
  if (attacks.empty() || defenses.empty() || seeds.empty()) {
    throw std::invalid_argument("run_grid: attacks, defenses and seeds must be non-empty");
  }
  GridRun run;
  GridResult& grid = run.result;
  grid.attacks = attacks;
  grid.defenses = defenses;
  grid.seeds = seeds;

  std::vector<Job> jobs;
  for (AttackTag a : attacks) {
    for (DefenseTag d : defenses) {
      GridCell cell;
      cell.attack = a;
      cell.defense = d;
      const std::size_t index = grid.cells.size();
      grid.cells.push_back(std::move(cell));
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        Job job;
        job.cell = index;
        job.seed_index = s;
        job.config = grid_cell_config(base, a, d, seeds[s]);
        job.hash = config_hash(job.config);
        jobs.push_back(std::move(job));
      }
    }
  }

  auto cache_path = [&](const Job& job) { return options.cache_dir / (job.hash + ".json"); };

  // Validation and cache lookup.
  std::map<std::size_t, std::vector<std::size_t>> pending_by_seed;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    Job& job = jobs[j];
    try {
      job.config.validate();
    } catch (const std::exception& e) {
      job.error = sanitize(e.what());
      continue;
    }
    if (!options.cache_dir.empty() && fs::exists(cache_path(job))) {
      try {
        ExperimentReport cached = read_report_file(cache_path(job));
        if (cached.config_hash == job.hash) {
          job.report = std::move(cached);
          job.cached = true;
          ++run.cache_hits;
          if (options.on_cell) options.on_cell(job.config, &*job.report, true);
          continue;
        }
      } catch (const ReportError&) {
        // Unreadable cache entry: recompute and overwrite it.
      }
    }
    pending_by_seed[job.seed_index].push_back(j);
  }

  // Cells of one seed share the dataset split; they differ only in attack and defense.
  for (auto& [seed_index, pending] : pending_by_seed) {
    std::optional<DatasetSplit> split;
    try {
      split = build_split(jobs[pending.front()].config);
    } catch (const std::exception& e) {
      for (std::size_t j : pending) jobs[j].error = sanitize(e.what());
      continue;
    }
    const auto count = static_cast<std::ptrdiff_t>(pending.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t p = 0; p < count; ++p) {
      Job& job = jobs[pending[static_cast<std::size_t>(p)]];
      try {
        job.report = run_experiment(job.config, *split);
        if (!options.cache_dir.empty()) write_text_file(cache_path(job), report_to_text(*job.report));
      } catch (const std::exception& e) {
        job.report.reset();
        job.error = sanitize(e.what());
      }
#pragma omp critical(flpoison_grid_progress)
      {
        if (job.error.empty()) ++run.experiments_run;
        if (options.on_cell) options.on_cell(job.config, job.report ? &*job.report : nullptr, false);
      }
    }
  }

  for (GridCell& cell : grid.cells) {
    cell.config_hashes.assign(seeds.size(), "");
    cell.training_scores.assign(seeds.size(), std::numeric_limits<double>::quiet_NaN());
    cell.backdoor_scores.assign(seeds.size(), std::numeric_limits<double>::quiet_NaN());
    cell.diverged.assign(seeds.size(), false);
    cell.errors.assign(seeds.size(), "");
  }
  for (Job& job : jobs) {
    GridCell& cell = grid.cells[job.cell];
    const std::size_t s = job.seed_index;
    cell.config_hashes[s] = job.hash;
    if (!job.report) {
      cell.errors[s] = job.error.empty() ? "unknown failure" : job.error;
      continue;
    }
    cell.training_scores[s] = job.report->training_score;
    cell.backdoor_scores[s] = job.report->backdoor_score;
    cell.diverged[s] = job.report->diverged;
    run.reports.push_back(std::move(*job.report));
  }
  for (GridCell& cell : grid.cells) summarize_cell(cell);
  return run;
}

std::string grid_table_csv(const GridResult& grid) {
  std::string out = "attack";
  for (DefenseTag d : grid.defenses) out += "," + to_string(d);
  out += '\n';
  for (AttackTag a : grid.attacks) {
    out += to_string(a);
    for (DefenseTag d : grid.defenses) out += "," + format_double(grid.cell(a, d).mean);
    out += '\n';
  }
  return out;
}

std::string grid_cells_csv(const GridResult& grid) {
  std::string out = "attack,defense,seed,config_hash,training_score,backdoor_score,diverged,error\n";
  for (const GridCell& cell : grid.cells) {
    for (std::size_t s = 0; s < grid.seeds.size(); ++s) {
      out += to_string(cell.attack) + ',' + to_string(cell.defense) + ',' + std::to_string(grid.seeds[s]) + ',' +
             cell.config_hashes[s] + ',' + format_double(cell.training_scores[s]) + ',' +
             format_double(cell.backdoor_scores[s]) + ',' + (cell.diverged[s] ? "1" : "0") + ',' + cell.errors[s] +
             '\n';
    }
  }
  return out;
}

GridResult parse_grid_csv(const std::string& table_csv, const std::string& cells_csv) {
  const auto cell_lines = lines_of(cells_csv);
  if (cell_lines.empty() ||
      cell_lines.front() != "attack,defense,seed,config_hash,training_score,backdoor_score,diverged,error") {
    throw ReportError("grid_cells: unexpected header");
  }
  GridResult grid;
  auto add_unique = [](auto& list, auto value) {
    if (std::find(list.begin(), list.end(), value) == list.end()) list.push_back(value);
  };
  struct Row {
    AttackTag attack;
    DefenseTag defense;
    std::uint64_t seed;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;
  for (std::size_t i = 1; i < cell_lines.size(); ++i) {
    auto cells = split_line(cell_lines[i]);
    if (cells.size() != 8) throw ReportError("grid_cells: expected 8 columns in '" + cell_lines[i] + "'");
    Row row{attack_tag_from_string(cells[0]), defense_tag_from_string(cells[1]), std::stoull(cells[2]),
            std::move(cells)};
    add_unique(grid.attacks, row.attack);
    add_unique(grid.defenses, row.defense);
    add_unique(grid.seeds, row.seed);
    rows.push_back(std::move(row));
  }
  for (AttackTag a : grid.attacks) {
    for (DefenseTag d : grid.defenses) {
      GridCell cell;
      cell.attack = a;
      cell.defense = d;
      for (std::uint64_t seed : grid.seeds) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) {
          return r.attack == a && r.defense == d && r.seed == seed;
        });
        if (it == rows.end()) {
          throw ReportError("grid_cells: missing " + to_string(a) + "/" + to_string(d) + " seed " +
                            std::to_string(seed));
        }
        cell.config_hashes.push_back(it->cells[3]);
        cell.training_scores.push_back(parse_double(it->cells[4]));
        cell.backdoor_scores.push_back(parse_double(it->cells[5]));
        cell.diverged.push_back(it->cells[6] == "1");
        cell.errors.push_back(it->cells[7]);
      }
      summarize_cell(cell);
      grid.cells.push_back(std::move(cell));
    }
  }

  // The wide table must agree with the per-seed values.
  const auto table_lines = lines_of(table_csv);
  if (table_lines.size() != grid.attacks.size() + 1) throw ReportError("grid: row count mismatch");
  const auto header = split_line(table_lines.front());
  if (header.size() != grid.defenses.size() + 1 || header.front() != "attack") {
    throw ReportError("grid: unexpected header");
  }
  for (std::size_t i = 1; i < table_lines.size(); ++i) {
    const auto cells = split_line(table_lines[i]);
    if (cells.size() != header.size()) throw ReportError("grid: ragged row '" + table_lines[i] + "'");
    const AttackTag a = attack_tag_from_string(cells[0]);
    for (std::size_t k = 1; k < cells.size(); ++k) {
      const DefenseTag d = defense_tag_from_string(header[k]);
      if (!same_value(parse_double(cells[k]), grid.cell(a, d).mean)) {
        throw ReportError("grid: table value for " + cells[0] + "/" + header[k] + " disagrees with grid_cells");
      }
    }
  }
  return grid;
}

std::string grid_pretty_table(const GridResult& grid) {
  std::size_t attack_width = 6;
  for (AttackTag a : grid.attacks) attack_width = std::max(attack_width, to_string(a).size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(attack_width)) << "attack";
  std::vector<std::string> texts;
  std::size_t col = 12;
  for (const GridCell& c : grid.cells) {
    std::ostringstream cell;
    if (std::isnan(c.mean)) {
      cell << "failed";
    } else {
      cell << std::setprecision(4) << c.mean << " ± " << std::setprecision(3) << c.stddev;
      if (c.failed()) cell << " !";
    }
    texts.push_back(cell.str());
    col = std::max(col, texts.back().size());
  }
  for (DefenseTag d : grid.defenses) col = std::max(col, to_string(d).size());
  for (DefenseTag d : grid.defenses) out << "  " << std::setw(static_cast<int>(col)) << to_string(d);
  out << '\n';
  std::size_t k = 0;
  for (AttackTag a : grid.attacks) {
    out << std::setw(static_cast<int>(attack_width)) << to_string(a);
    for (std::size_t d = 0; d < grid.defenses.size(); ++d) out << "  " << std::setw(static_cast<int>(col)) << texts[k++];
    out << '\n';
  }
  return out.str();
}

GridArtifacts emit_grid_reports(const GridRun& run, const fs::path& out_dir) {
  GridArtifacts paths{out_dir / "grid.csv", out_dir / "grid_cells.csv", out_dir / "rounds.jsonl",
                      out_dir / "trajectories"};
  write_text_file(paths.table, grid_table_csv(run.result));
  write_text_file(paths.cells, grid_cells_csv(run.result));
  std::string rounds;
  for (const auto& report : run.reports) rounds += rounds_jsonl(report);
  write_text_file(paths.rounds, rounds);
  for (const auto& report : run.reports) {
    write_text_file(paths.trajectories / (report.config_hash + ".csv"), trajectory_csv(report));
  }
  return paths;
}

}  // namespace flpoison
