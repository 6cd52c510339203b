#include "flpoison/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flpoison/rng.hpp"

namespace flpoison {

std::string to_string(AttackTag tag) {
  switch (tag) {
    case AttackTag::none:
      return "none";
    case AttackTag::label_flip:
      return "label_flip";
    case AttackTag::gradient_ascent:
      return "gradient_ascent";
    case AttackTag::msa:
      return "msa";
    case AttackTag::flstealth:
      return "flstealth";
    case AttackTag::ota:
      return "ota";
  }
  return "none";
}

AttackTag attack_tag_from_string(const std::string& name) {
  for (AttackTag tag : all_attack_tags()) {
    if (to_string(tag) == name) return tag;
  }
  throw std::invalid_argument("unknown attack kind '" + name + "'");
}

const std::vector<AttackTag>& all_attack_tags() {
  static const std::vector<AttackTag> tags = {AttackTag::none, AttackTag::label_flip, AttackTag::gradient_ascent,
                                              AttackTag::msa,  AttackTag::flstealth,  AttackTag::ota};
  return tags;
}

void AttackKind::validate(const SceneConfig& scene) const {
  if (!std::isfinite(label_flip_factor)) throw std::invalid_argument("label_flip_factor must be finite");
  if (msa.shuffle_rows < 1) throw std::invalid_argument("msa.shuffle_rows must be at least 1");
  if (msa.scale_beta && !(*msa.scale_beta > 0.0)) throw std::invalid_argument("msa.scale_beta must be positive");
  if (!(flstealth.kappa >= 0.0)) throw std::invalid_argument("flstealth.kappa must be non-negative");
  if (flstealth.byz_epochs < 1) throw std::invalid_argument("flstealth.byz_epochs must be positive");
  if (!(flstealth.byz_learning_rate > 0.0)) throw std::invalid_argument("flstealth.byz_learning_rate must be positive");
  if (!(ota.poison_fraction >= 0.0 && ota.poison_fraction <= 1.0)) {
    throw std::invalid_argument("ota.poison_fraction must lie in [0,1]");
  }
  if (ota.direction != 1 && ota.direction != -1) throw std::invalid_argument("ota.direction must be +1 or -1");
  if (!std::isfinite(ota.turn_magnitude)) throw std::invalid_argument("ota.turn_magnitude must be finite");
  ota.trigger.validate(scene);
}

std::vector<Sample> flip_labels(std::span<const Sample> data, double factor) {
  std::vector<Sample> flipped(data.begin(), data.end());
  for (Sample& s : flipped) {
    for (double& y : s.target) y *= factor;
  }
  return flipped;
}

ModelParams label_flip_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                             std::uint64_t seed, double factor) {
  const std::vector<Sample> flipped = flip_labels(data, factor);
  return train_honest(global, flipped, hyper, seed);
}

ModelParams gradient_ascent_train(const ModelParams& global, std::span<const Sample> data,
                                  const TrainingHyper& hyper, std::uint64_t seed) {
  return train_with_gradient(global, data, hyper, seed,
                             [](const ModelParams& p, std::span<const Sample* const> batch, std::span<double> grad) {
                               accumulate_gradient(p, batch, -1.0, grad);
                             });
}

ModelParams msa_transform(const ModelParams& model, const MsaConfig& config, std::uint64_t seed) {
  if (model.layer_count() < 2) throw std::invalid_argument("msa_transform: model has no hidden layer");
  if (config.shuffle_rows < 1) throw std::invalid_argument("msa_transform: shuffle_rows must be at least 1");
  if (config.scale_beta && !(*config.scale_beta > 0.0)) throw std::invalid_argument("msa_transform: beta must be positive");

  ModelParams out = model;
  Rng rng = make_rng(mix_seed(seed, salt::kAttack));
  for (std::size_t k = 0; k + 1 < model.layer_count(); ++k) {
    const std::size_t width = model.out_width(k);
    const std::size_t in = model.in_width(k);
    const std::size_t next_in = width;
    const std::size_t next_out = model.out_width(k + 1);
    const std::size_t chosen = std::min(width, static_cast<std::size_t>(config.shuffle_rows));

    std::vector<std::size_t> units(width);
    std::iota(units.begin(), units.end(), std::size_t{0});
    shuffle(units, rng);
    units.resize(chosen);
    std::sort(units.begin(), units.end());

    // Permutation over the chosen units; redrawn until it moves something.
    std::vector<std::size_t> perm(chosen);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (chosen >= 2) {
      do {
        shuffle(perm, rng);
      } while (std::is_sorted(perm.begin(), perm.end()));
    }

    // Layer k's rows already carry the previous layer's column moves, so copy from the current state.
    const ModelParams snapshot = out;
    const auto src_w = snapshot.weights(k);
    const auto src_b = snapshot.bias(k);
    const auto src_next = snapshot.weights(k + 1);
    auto dst_w = out.weights(k);
    auto dst_b = out.bias(k);
    auto dst_next = out.weights(k + 1);
    for (std::size_t i = 0; i < chosen; ++i) {
      const std::size_t to = units[i];
      const std::size_t from = units[perm[i]];
      std::copy_n(src_w.begin() + static_cast<std::ptrdiff_t>(from * in), in,
                  dst_w.begin() + static_cast<std::ptrdiff_t>(to * in));
      dst_b[to] = src_b[from];
      for (std::size_t r = 0; r < next_out; ++r) dst_next[r * next_in + to] = src_next[r * next_in + from];
    }

    if (config.scale_beta) {
      const double beta = *config.scale_beta;
      for (double& w : out.weights(k)) w *= beta;
      for (double& b : out.bias(k)) b *= beta;
      for (double& w : out.weights(k + 1)) w /= beta;
    }
  }
  return out;
}

ModelParams msa_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                      const MsaConfig& config, std::uint64_t seed) {
  return msa_transform(train_honest(global, data, hyper, seed), config, seed);
}

double flstealth_objective(const ModelParams& theta_b, const ModelParams& theta_h,
                           std::span<const Sample* const> batch, double kappa) {
  if (batch.empty()) throw std::invalid_argument("flstealth_objective: empty batch");
  double loss = 0.0;
  for (const Sample* s : batch) loss += sample_loss(theta_b, *s);
  loss /= static_cast<double>(batch.size());
  return -kappa * loss + params_mse(theta_h, theta_b);
}

namespace {

void add_flstealth_gradient(const ModelParams& theta_b, const ModelParams& theta_h,
                            std::span<const Sample* const> batch, double kappa, std::span<double> grad) {
  if (!theta_b.same_shape(theta_h)) throw std::invalid_argument("flstealth: model shape mismatch");
  accumulate_gradient(theta_b, batch, -kappa, grad);
  const auto b = theta_b.values();
  const auto h = theta_h.values();
  const double scale = 2.0 / static_cast<double>(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) grad[i] += scale * (b[i] - h[i]);
}

}  // namespace

std::vector<double> flstealth_gradient(const ModelParams& theta_b, const ModelParams& theta_h,
                                       std::span<const Sample* const> batch, double kappa) {
  std::vector<double> grad(theta_b.parameter_count(), 0.0);
  add_flstealth_gradient(theta_b, theta_h, batch, kappa, grad);
  return grad;
}

ModelParams flstealth_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                            const FLStealthConfig& config, std::uint64_t seed) {
  const ModelParams theta_h = train_honest(global, data, hyper, seed);
  TrainingHyper byz = hyper;
  byz.epochs = config.byz_epochs;
  byz.learning_rate = config.byz_learning_rate;
  const double kappa = config.kappa;
  return train_with_gradient(
      global, data, byz, mix_seed(seed, salt::kAttack),
      [&theta_h, kappa](const ModelParams& p, std::span<const Sample* const> batch, std::span<double> grad) {
        add_flstealth_gradient(p, theta_h, batch, kappa, grad);
      });
}

std::vector<Sample> ota_poison(std::span<const Sample> data, const OtaConfig& config, std::uint64_t seed,
                               const SceneConfig& scene) {
  std::vector<Sample> mixed(data.begin(), data.end());
  const auto n_poison = static_cast<std::size_t>(std::lround(config.poison_fraction * static_cast<double>(data.size())));
  if (n_poison == 0) return mixed;

  Rng rng = make_rng(mix_seed(seed, salt::kAttack));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  for (std::size_t k = 0; k < n_poison; ++k) {
    Sample& s = mixed[order[k]];
    s.image = inject_trigger(s.image, scene, config.trigger, rng);
    s.target = make_turn_target(s.target, config.turn_magnitude, config.direction);
    s.poisoned = true;
  }
  return mixed;
}

ModelParams ota_train(const ModelParams& global, std::span<const Sample> data, const TrainingHyper& hyper,
                      const OtaConfig& config, std::uint64_t seed, const SceneConfig& scene) {
  if (data.empty()) throw std::invalid_argument("ota_train: empty dataset");
  const std::vector<Sample> mixed = ota_poison(data, config, seed, scene);
  return train_honest(global, mixed, hyper, seed);
}

ModelParams train_malicious(const AttackKind& kind, const ModelParams& global, std::span<const Sample> data,
                            const TrainingHyper& hyper, std::uint64_t seed, const SceneConfig& scene) {
  if (data.empty()) throw std::invalid_argument("train_malicious: empty dataset");
  switch (kind.tag) {
    case AttackTag::none:
      return train_honest(global, data, hyper, seed);
    case AttackTag::label_flip:
      return label_flip_train(global, data, hyper, seed, kind.label_flip_factor);
    case AttackTag::gradient_ascent:
      return gradient_ascent_train(global, data, hyper, seed);
    case AttackTag::msa:
      return msa_train(global, data, hyper, kind.msa, seed);
    case AttackTag::flstealth:
      return flstealth_train(global, data, hyper, kind.flstealth, seed);
    case AttackTag::ota:
      return ota_train(global, data, hyper, kind.ota, seed, scene);
  }
  throw std::invalid_argument("train_malicious: unknown attack tag");
}

}  // namespace flpoison
