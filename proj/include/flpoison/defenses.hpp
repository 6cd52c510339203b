#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flpoison/nn.hpp"
#include "flpoison/sample.hpp"

namespace flpoison {

/// A client's submitted model. The flat view is the parameter storage
/// itself, so it always equals flatten(params).
struct ClientUpdate {
  int client_id = 0;
  ModelParams params;

  std::span<const double> flat() const { return params.values(); }
};

enum class DefenseTag { fedavg, krum, multi_krum, trimmed_mean, fltrust, lfr, loss_defense, pca_defense, loss_fusion };

std::string to_string(DefenseTag tag);
DefenseTag defense_tag_from_string(const std::string& name);
const std::vector<DefenseTag>& all_defense_tags();

struct DefenseKind {
  DefenseTag tag = DefenseTag::fedavg;
  int f = 4;          // assumed byzantine count (Krum family)
  int m = 6;          // Multi-Krum selection count
  int beta = 2;       // Trimmed Mean: values dropped per side
  int n_exclude = 4;  // PCA / LFR / Loss Defense / LossFusion

  void validate() const;
  friend bool operator==(const DefenseKind&, const DefenseKind&) = default;
};

struct AggregationOutcome {
  ModelParams global;
  std::vector<int> excluded_ids;            // ascending
  std::map<int, double> per_client_scores;  // defense-specific diagnostic
};

// Server-side inputs some defenses need.
struct DefenseContext {
  const ModelParams* global_before = nullptr;  // FLTrust
  std::span<const Sample> defense_set;         // FLTrust and the loss-based defenses
  TrainingHyper hyper;                         // FLTrust server update
  std::uint64_t seed = 0;                      // FLTrust server update
};

// Mean L1 loss of a model over a dataset.
double loss_of(const ModelParams& params, std::span<const Sample> dataset);

AggregationOutcome fedavg(std::span<const ClientUpdate> updates);

// Krum score: sum of squared distances to the n - f - 2 nearest other updates.
std::map<int, double> krum_scores(std::span<const ClientUpdate> updates, int f);
AggregationOutcome krum(std::span<const ClientUpdate> updates, int f);
AggregationOutcome multi_krum(std::span<const ClientUpdate> updates, int f, int m);

// Coordinate-wise: drop beta smallest and beta largest values, average the rest.
AggregationOutcome trimmed_mean(std::span<const ClientUpdate> updates, int beta);

/// Trust-bootstrapped aggregation. Scores are the trust values
/// max(0, cos(client delta, server delta)).
AggregationOutcome fltrust(std::span<const ClientUpdate> updates, const ModelParams& global_before,
                           std::span<const Sample> defense_set, const TrainingHyper& hyper, std::uint64_t seed);
// The aggregation step of fltrust for a given server delta.
AggregationOutcome fltrust_aggregate(std::span<const ClientUpdate> updates, const ModelParams& global_before,
                                     std::span<const double> server_delta);

// Excludes the n_exclude clients whose own model has the highest defense-set loss.
AggregationOutcome loss_defense(std::span<const ClientUpdate> updates, std::span<const Sample> defense_set,
                                int n_exclude);

/// Loss-function based rejection. impact(i) = L(all) - L(all without i),
/// computed once against the full aggregate; the n_exclude largest impacts
/// are excluded.
AggregationOutcome lfr(std::span<const ClientUpdate> updates, std::span<const Sample> defense_set, int n_exclude);

// Top principal components of the centered updates, via power iteration on
// the n x n Gram matrix.
struct PrincipalProjection {
  std::vector<std::array<double, 2>> coords;  // per update
  std::array<double, 2> eigenvalues{};        // of the Gram / scatter matrix
};
PrincipalProjection principal_projection(std::span<const std::span<const double>> vectors, int iterations = 100,
                                         double tolerance = 1e-10);

// Excludes the n_exclude projected points farthest from the coordinate-wise median.
AggregationOutcome pca_defense(std::span<const ClientUpdate> updates, int n_exclude);

// Returns the LFR aggregate when its defense-set loss is strictly lower than
// the Loss Defense aggregate's, the Loss Defense aggregate otherwise.
AggregationOutcome loss_fusion(std::span<const ClientUpdate> updates, std::span<const Sample> defense_set,
                               int n_exclude);

AggregationOutcome aggregate(const DefenseKind& kind, std::span<const ClientUpdate> updates,
                             const DefenseContext& context);

}  // namespace flpoison
