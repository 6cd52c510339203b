#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flpoison/federation.hpp"

namespace flpoison {

inline constexpr int kReportFormatVersion = 1;

// Unreadable, wrong-version or inconsistent report artifact.
class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest text that parses back to the same double ("nan", "inf", "-inf" for
// the non-finite values).
std::string format_double(double value);
double parse_double(const std::string& text);

nlohmann::json round_to_json(const RoundRecord& record);
RoundRecord round_from_json(const nlohmann::json& doc);

// Full report: format version, config snapshot, config hash, records, scores.
nlohmann::json report_to_json(const ExperimentReport& report);
// Checks the version and that the stored hash matches the config snapshot.
ExperimentReport report_from_json(const nlohmann::json& doc);
std::string report_to_text(const ExperimentReport& report);
ExperimentReport report_from_text(const std::string& text);

// One JSON object per round, each carrying its experiment's config hash.
std::string rounds_jsonl(const ExperimentReport& report);
std::vector<std::pair<std::string, RoundRecord>> parse_rounds_jsonl(const std::string& text);

struct TrajectoryRow {
  int round = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double backdoor_test_loss = 0.0;
  friend bool operator==(const TrajectoryRow&, const TrajectoryRow&) = default;
};
std::string trajectory_csv(const ExperimentReport& report);
std::vector<TrajectoryRow> parse_trajectory_csv(const std::string& text);

// File helpers. Writes go to a temporary sibling that is renamed into place.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

ExperimentReport read_report_file(const std::filesystem::path& path);

struct RunArtifacts {
  std::filesystem::path report;      // report.json
  std::filesystem::path rounds;      // rounds.jsonl
  std::filesystem::path trajectory;  // trajectory.csv
};
RunArtifacts emit_reports(const ExperimentReport& report, const std::filesystem::path& out_dir);

}  // namespace flpoison
