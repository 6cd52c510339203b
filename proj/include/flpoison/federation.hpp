#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "flpoison/attacks.hpp"
#include "flpoison/defenses.hpp"
#include "flpoison/nn.hpp"
#include "flpoison/synthdata.hpp"

namespace flpoison {

/// Every knob of one federated experiment.
struct FederationConfig {
  int rounds = 30;
  int total_clients = 40;
  int malicious_count = 4;
  int sampled_per_round = 10;

  // Desk-scale split sizes per (round, client) cell and held-out sets.
  int per_client = 6;
  int test_n = 800;
  int defense_n = 30;
  SceneConfig scene;

  std::vector<std::size_t> hidden_layers = {64, 32};
  TrainingHyper hyper;
  AttackKind attack;
  DefenseKind defense;

  std::uint64_t data_seed = 1;
  std::uint64_t train_seed = 2;
  std::uint64_t sample_seed = 3;

  int score_window = 10;

  // Input width, hidden layers, 51 outputs.
  LayerSizes layer_sizes() const;
  std::size_t dataset_size() const;
  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

struct RoundRecord {
  int round = 0;
  std::vector<int> sampled;            // ascending
  std::vector<int> malicious_sampled;  // subset of sampled
  std::vector<int> excluded;
  std::map<int, double> client_scores;
  double train_loss = 0.0;  // mean final local loss of the honest sampled clients
  double test_loss = 0.0;
  double backdoor_test_loss = 0.0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct ExperimentReport {
  FederationConfig config;
  std::string config_hash;
  std::vector<RoundRecord> rounds;
  bool diverged = false;
  int diverged_round = -1;
  double training_score = 0.0;
  double backdoor_score = 0.0;
  bool partial_window = false;
};

// One entry per training-cell read: which client read which (round, client) cell.
struct CellRead {
  int round = 0;
  int cell_client = 0;
  int reader = 0;
  friend bool operator==(const CellRead&, const CellRead&) = default;
};

std::set<int> assign_malicious(const FederationConfig& config);

// Uniform sample without replacement keyed by (sample_seed, round), ascending.
std::vector<int> select_clients(int round, const FederationConfig& config);

// Dataset and split for a config (deterministic in data_seed).
DatasetSplit build_split(const FederationConfig& config);

/// One round: sampled clients train on their (round, client) cell, the defense
/// aggregates, and the new global is evaluated on the test and backdoor sets.
std::pair<ModelParams, RoundRecord> run_round(const ModelParams& global, int round, const FederationConfig& config,
                                              const DatasetSplit& split, std::vector<CellRead>* access_log = nullptr);

ExperimentReport run_experiment(const FederationConfig& config);
// Variant reusing an existing split (the split must come from build_split(config)).
ExperimentReport run_experiment(const FederationConfig& config, const DatasetSplit& split);

}  // namespace flpoison
