#include "flpoison/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "flpoison/config.hpp"

namespace flpoison {

using nlohmann::json;

namespace fs = std::filesystem;

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return {buffer, result.ptr};
}

double parse_double(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    throw ReportError("not a number: '" + text + "'");
  }
  return value;
}

namespace {

// JSON has no NaN or infinity: NaN is null, infinities are strings.
json number_to_json(double value) {
  if (std::isnan(value)) return nullptr;
  if (std::isinf(value)) return format_double(value);
  return value;
}

double number_from_json(const json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end()) throw ReportError(std::string("missing field '") + key + "'");
  if (it->is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (it->is_string()) {
    const auto text = it->get<std::string>();
    if (text == "inf" || text == "-inf") return parse_double(text);
  }
  if (!it->is_number()) throw ReportError(std::string("field '") + key + "' is not a number");
  return it->get<double>();
}

template <typename T>
T field(const json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end()) throw ReportError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ReportError(std::string("field '") + key + "': " + e.what());
  }
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ReportError(what + ": invalid JSON: " + e.what());
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

json round_to_json(const RoundRecord& r) {
  json scores = json::object();
  for (const auto& [id, score] : r.client_scores) scores[std::to_string(id)] = number_to_json(score);
  return {{"round", r.round},
          {"sampled", r.sampled},
          {"malicious_sampled", r.malicious_sampled},
          {"excluded", r.excluded},
          {"client_scores", scores},
          {"train_loss", number_to_json(r.train_loss)},
          {"test_loss", number_to_json(r.test_loss)},
          {"backdoor_test_loss", number_to_json(r.backdoor_test_loss)}};
}

RoundRecord round_from_json(const json& doc) {
  RoundRecord r;
  r.round = field<int>(doc, "round");
  r.sampled = field<std::vector<int>>(doc, "sampled");
  r.malicious_sampled = field<std::vector<int>>(doc, "malicious_sampled");
  r.excluded = field<std::vector<int>>(doc, "excluded");
  const json& scores = doc.at("client_scores");
  for (auto it = scores.begin(); it != scores.end(); ++it) {
    double score = 0.0;
    if (it->is_null()) {
      score = std::numeric_limits<double>::quiet_NaN();
    } else if (it->is_string()) {
      score = parse_double(it->get<std::string>());
    } else {
      score = it->get<double>();
    }
    r.client_scores[std::stoi(it.key())] = score;
  }
  r.train_loss = number_from_json(doc, "train_loss");
  r.test_loss = number_from_json(doc, "test_loss");
  r.backdoor_test_loss = number_from_json(doc, "backdoor_test_loss");
  return r;
}

json report_to_json(const ExperimentReport& report) {
  json rounds = json::array();
  for (const auto& r : report.rounds) rounds.push_back(round_to_json(r));
  return {{"format_version", kReportFormatVersion},
          {"config_hash", report.config_hash},
          {"config", config_to_json(report.config)},
          {"diverged", report.diverged},
          {"diverged_round", report.diverged_round},
          {"training_score", number_to_json(report.training_score)},
          {"backdoor_score", number_to_json(report.backdoor_score)},
          {"partial_window", report.partial_window},
          {"train_loss_note", "mean final local loss over honest sampled clients"},
          {"rounds", rounds}};
}

ExperimentReport report_from_json(const json& doc) {
  if (!doc.is_object()) throw ReportError("report: expected a JSON object");
  const int version = field<int>(doc, "format_version");
  if (version != kReportFormatVersion) {
    throw ReportError("report: unsupported format_version " + std::to_string(version) + " (expected " +
                      std::to_string(kReportFormatVersion) + ")");
  }
  ExperimentReport report;
  try {
    report.config = config_from_json(doc.at("config"));
  } catch (const std::exception& e) {
    throw ReportError(std::string("report: bad config snapshot: ") + e.what());
  }
  report.config_hash = field<std::string>(doc, "config_hash");
  if (report.config_hash != config_hash(report.config)) {
    throw ReportError("report: config_hash does not match the config snapshot");
  }
  report.diverged = field<bool>(doc, "diverged");
  report.diverged_round = field<int>(doc, "diverged_round");
  report.training_score = number_from_json(doc, "training_score");
  report.backdoor_score = number_from_json(doc, "backdoor_score");
  report.partial_window = field<bool>(doc, "partial_window");
  for (const json& r : doc.at("rounds")) report.rounds.push_back(round_from_json(r));
  return report;
}

std::string report_to_text(const ExperimentReport& report) { return report_to_json(report).dump(2) + "\n"; }

ExperimentReport report_from_text(const std::string& text) { return report_from_json(parse_json(text, "report")); }

std::string rounds_jsonl(const ExperimentReport& report) {
  std::string out;
  for (const auto& r : report.rounds) {
    json line = round_to_json(r);
    line["config_hash"] = report.config_hash;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::vector<std::pair<std::string, RoundRecord>> parse_rounds_jsonl(const std::string& text) {
  std::vector<std::pair<std::string, RoundRecord>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json doc = parse_json(line, "rounds.jsonl");
    out.emplace_back(field<std::string>(doc, "config_hash"), round_from_json(doc));
  }
  return out;
}

std::string trajectory_csv(const ExperimentReport& report) {
  std::string out = "round,train_loss,test_loss,backdoor_test_loss\n";
  for (const auto& r : report.rounds) {
    out += std::to_string(r.round) + ',' + format_double(r.train_loss) + ',' + format_double(r.test_loss) + ',' +
           format_double(r.backdoor_test_loss) + '\n';
  }
  return out;
}

std::vector<TrajectoryRow> parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "round,train_loss,test_loss,backdoor_test_loss") {
    throw ReportError("trajectory: unexpected header");
  }
  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw ReportError("trajectory: expected 4 columns in '" + line + "'");
    rows.push_back({std::stoi(cells[0]), parse_double(cells[1]), parse_double(cells[2]), parse_double(cells[3])});
  }
  return rows;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw std::runtime_error(path.string() + ": rename failed: " + ec.message());
}

ExperimentReport read_report_file(const fs::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::runtime_error& e) {
    throw ReportError(e.what());
  }
  try {
    return report_from_text(text);
  } catch (const ReportError& e) {
    throw ReportError(path.string() + ": " + e.what());
  }
}

RunArtifacts emit_reports(const ExperimentReport& report, const fs::path& out_dir) {
  RunArtifacts paths{out_dir / "report.json", out_dir / "rounds.jsonl", out_dir / "trajectory.csv"};
  write_text_file(paths.report, report_to_text(report));
  write_text_file(paths.rounds, rounds_jsonl(report));
  write_text_file(paths.trajectory, trajectory_csv(report));
  return paths;
}

}  // namespace flpoison
