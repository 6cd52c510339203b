#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flpoison/nn.hpp"
#include "flpoison/synthdata.hpp"

namespace flpoison {

enum class AttackTag { none, label_flip, gradient_ascent, msa, flstealth, ota };

std::string to_string(AttackTag tag);
AttackTag attack_tag_from_string(const std::string& name);
const std::vector<AttackTag>& all_attack_tags();

struct FLStealthConfig {
  double kappa = 1e-9;
  int byz_epochs = 15;
  double byz_learning_rate = 1e-4;
  friend bool operator==(const FLStealthConfig&, const FLStealthConfig&) = default;
};

struct OtaConfig {
  double poison_fraction = 0.30;
  TriggerSpec trigger;
  double turn_magnitude = 0.5;
  int direction = 1;
  friend bool operator==(const OtaConfig&, const OtaConfig&) = default;
};

struct MsaConfig {
  int shuffle_rows = 100;               // clamped to each hidden layer's width
  std::optional<double> scale_beta;     // positive when present
  friend bool operator==(const MsaConfig&, const MsaConfig&) = default;
};

/// Attack selection plus the parameters of every kind; only the fields of
/// the active tag are consulted.
struct AttackKind {
  AttackTag tag = AttackTag::none;
  double label_flip_factor = -100.0;
  MsaConfig msa;
  FLStealthConfig flstealth;
  OtaConfig ota;

  void validate(const SceneConfig& scene) const;
  friend bool operator==(const AttackKind&, const AttackKind&) = default;
};

// Client-side training for a malicious participant. Tag none is honest.
ModelParams train_malicious(const AttackKind& kind, const ModelParams& global, std::span<const Sample> data,
                            const TrainingHyper& hyper, std::uint64_t seed, const SceneConfig& scene = {});

// Targets scaled by `factor` (default -100) before honest training.
std::vector<Sample> flip_labels(std::span<const Sample> data, double factor);
ModelParams label_flip_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                             std::uint64_t seed, double factor = -100.0);

// Honest training with the loss gradient negated.
ModelParams gradient_ascent_train(const ModelParams& global, std::span<const Sample> data,
                                  const TrainingHyper& hyper, std::uint64_t seed);

/// Function-preserving scramble. For each hidden layer, a random subset of
/// min(shuffle_rows, width) units is permuted: rows of that layer's weights
/// and bias move together with the matching columns of the next layer. With
/// scale_beta, the layer is multiplied by beta and the next layer's columns
/// by 1/beta.
ModelParams msa_transform(const ModelParams& model, const MsaConfig& config, std::uint64_t seed);
// Honest local training followed by msa_transform.
ModelParams msa_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                      const MsaConfig& config, std::uint64_t seed);

/// Byzantine objective: -kappa * L1(batch; theta_b) + MSE(theta_h, theta_b).
double flstealth_objective(const ModelParams& theta_b, const ModelParams& theta_h,
                           std::span<const Sample* const> batch, double kappa);
std::vector<double> flstealth_gradient(const ModelParams& theta_b, const ModelParams& theta_h,
                                       std::span<const Sample* const> batch, double kappa);

/// Honest model theta_h first, then theta_b (starting at global) trained on the
/// byzantine objective for byz_epochs at byz_learning_rate. Returns theta_b.
ModelParams flstealth_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                            const FLStealthConfig& config, std::uint64_t seed);

// The poisoned copy of `data` used by ota_train: round(fraction * n) samples
// chosen uniformly get a trigger and a turned target.
std::vector<Sample> ota_poison(std::span<const Sample> data, const OtaConfig& config, std::uint64_t seed,
                               const SceneConfig& scene);
ModelParams ota_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                      const OtaConfig& config, std::uint64_t seed, const SceneConfig& scene = {});

}  // namespace flpoison
