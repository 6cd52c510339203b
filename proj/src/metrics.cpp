#include "flpoison/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace flpoison {

namespace {

template <typename Field>
double window_mean(const ExperimentReport& report, int window, Field field) {
  if (report.rounds.empty()) throw std::invalid_argument("score: report has no rounds");
  if (window < 1) throw std::invalid_argument("score: window must be at least 1");
  const std::size_t n = report.rounds.size();
  const std::size_t w = std::min(n, static_cast<std::size_t>(window));
  double sum = 0.0;
  for (std::size_t i = n - w; i < n; ++i) sum += field(report.rounds[i]);
  return sum / static_cast<double>(w);
}

}  // namespace

double training_score(const ExperimentReport& report, int window) {
  return window_mean(report, window, [](const RoundRecord& r) { return r.test_loss; });
}

double backdoor_score(const ExperimentReport& report, int window) {
  return window_mean(report, window, [](const RoundRecord& r) { return r.backdoor_test_loss; });
}

ScorePair score_pair(const ExperimentReport& report, int window) {
  ScorePair pair;
  pair.training_score = training_score(report, window);
  pair.backdoor_score = backdoor_score(report, window);
  pair.difference = pair.backdoor_score - pair.training_score;
  return pair;
}

bool window_is_partial(const ExperimentReport& report, int window) {
  return report.rounds.size() < static_cast<std::size_t>(window);
}

}  // namespace flpoison
