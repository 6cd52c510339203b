#pragma once

#include "flpoison/federation.hpp"

namespace flpoison {

struct ScorePair {
  double training_score = 0.0;
  double backdoor_score = 0.0;
  double difference = 0.0;  // backdoor_score - training_score
};

// Mean test loss over the last `window` rounds (all rounds when fewer).
double training_score(const ExperimentReport& report, int window = 10);
// Same window over the backdoor test loss.
double backdoor_score(const ExperimentReport& report, int window = 10);
ScorePair score_pair(const ExperimentReport& report, int window = 10);
// True when the report has fewer rounds than the window.
bool window_is_partial(const ExperimentReport& report, int window = 10);

}  // namespace flpoison
