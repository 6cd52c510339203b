#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <span>
#include <utility>
#include <vector>

#include "flpoison/sample.hpp"

namespace flpoison {

using LayerSizes = std::vector<std::size_t>;

// A computation produced NaN or infinity (diverged training).
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

std::size_t parameter_count(const LayerSizes& layer_sizes);

/// Parameters of a dense ReLU regression network.
///
/// Storage is one contiguous vector in canonical order: layer 0 weights
/// (row-major, out x in), layer 0 bias, layer 1 weights, layer 1 bias, ...
/// so the flat view used by aggregation and PCA is the storage itself.
class ModelParams {
 public:
  ModelParams() = default;
  // Zero-initialized parameters for the given architecture.
  explicit ModelParams(LayerSizes layer_sizes);

  static ModelParams unflatten(std::span<const double> flat, LayerSizes layer_sizes);

  const LayerSizes& layer_sizes() const { return sizes_; }
  std::size_t layer_count() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  std::size_t in_width(std::size_t layer) const { return sizes_.at(layer); }
  std::size_t out_width(std::size_t layer) const { return sizes_.at(layer + 1); }
  std::size_t parameter_count() const { return values_.size(); }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double> flatten() const { return values_; }

  bool same_shape(const ModelParams& other) const { return sizes_ == other.sizes_; }
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  LayerSizes sizes_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<double> values_;
};

inline std::vector<double> flatten(const ModelParams& params) { return params.flatten(); }
inline ModelParams unflatten(std::span<const double> flat, LayerSizes layer_sizes) {
  return ModelParams::unflatten(flat, std::move(layer_sizes));
}

struct TrainingHyper {
  int epochs = 3;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  friend bool operator==(const TrainingHyper&, const TrainingHyper&) = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  static AdamState fresh(std::size_t parameter_count) {
    return {std::vector<double>(parameter_count, 0.0), std::vector<double>(parameter_count, 0.0), 0};
  }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases.
// The last layer must have kOutputWidth units.
ModelParams init_model(const LayerSizes& layer_sizes, std::uint64_t seed);

// ReLU hidden layers, linear head.
std::vector<double> forward(const ModelParams& params, std::span<const float> image);

// Mean absolute error (1/n) * sum |target_i - pred_i|.
double l1_loss(std::span<const double> pred, std::span<const double> target);

// Loss of a single sample under the given parameters.
double sample_loss(const ModelParams& params, const Sample& sample);

/// Exact gradient of the mean per-sample L1 loss over the batch, multiplied by
/// loss_sign (+1 descent, -1 ascent). The L1 and ReLU subgradients at 0 are 0.
std::vector<double> backward(const ModelParams& params, std::span<const Sample> batch, int loss_sign = 1);
std::vector<double> backward(const ModelParams& params, std::span<const Sample* const> batch, int loss_sign = 1);

// Adds the batch gradient (times scale) into grad_out and returns the batch
// loss. Lets composite objectives reuse the backprop pass.
double accumulate_gradient(const ModelParams& params, std::span<const Sample* const> batch, double scale,
                           std::span<double> grad_out);

// Standard Adam with bias correction.
std::pair<ModelParams, AdamState> adam_step(const ModelParams& params, const AdamState& state,
                                            std::span<const double> gradient, const TrainingHyper& hyper);
// In-place variant used by the training loops.
void adam_update(std::span<double> params, AdamState& state, std::span<const double> gradient,
                 const TrainingHyper& hyper);

// Writes the objective gradient for `batch` at `params` into grad_out (which is
// zeroed by the caller).
using BatchGradientFn =
    std::function<void(const ModelParams& params, std::span<const Sample* const> batch, std::span<double> grad_out)>;

/// Mini-batch Adam for hyper.epochs epochs with a seeded shuffle per epoch and
/// a fresh optimizer state. The objective is supplied as a gradient callback.
ModelParams train_with_gradient(const ModelParams& start, std::span<const Sample> data, const TrainingHyper& hyper,
                                std::uint64_t seed, const BatchGradientFn& gradient_fn);

ModelParams train_honest(const ModelParams& start, std::span<const Sample> data, const TrainingHyper& hyper,
                         std::uint64_t seed);

// Mean squared difference over all scalars.
double params_mse(const ModelParams& a, const ModelParams& b);
double params_mse(std::span<const double> a, std::span<const double> b);

// a.b / (|a||b|); 0 when either norm is 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double l2_norm(std::span<const double> v);

}  // namespace flpoison
