#include "flpoison/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "flpoison/rng.hpp"

namespace flpoison {

namespace {

void check_layer_sizes(const LayerSizes& sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("layer_sizes needs at least an input and an output width");
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("layer_sizes entries must be positive");
  }
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Per-sample activations. pre[k] is layer k's affine output, post[k] its
// input (post[0] is the image).
struct Activations {
  std::vector<std::vector<double>> post;
  std::vector<std::vector<double>> pre;
};

void run_forward(const ModelParams& params, std::span<const float> image, Activations& acts) {
  const std::size_t layers = params.layer_count();
  if (image.size() != params.in_width(0)) {
    throw std::invalid_argument("forward: image has " + std::to_string(image.size()) + " entries, network expects " +
                                std::to_string(params.in_width(0)));
  }
  acts.post.resize(layers + 1);
  acts.pre.resize(layers);
  acts.post[0].assign(image.begin(), image.end());
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = params.in_width(k);
    const std::size_t out = params.out_width(k);
    const auto w = params.weights(k);
    const auto b = params.bias(k);
    const std::vector<double>& x = acts.post[k];
    std::vector<double>& z = acts.pre[k];
    z.resize(out);
    for (std::size_t j = 0; j < out; ++j) {
      const double* row = w.data() + j * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      z[j] = acc + b[j];
    }
    std::vector<double>& a = acts.post[k + 1];
    a = z;
    if (k + 1 < layers) {
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    }
  }
}

}  // namespace

std::size_t parameter_count(const LayerSizes& layer_sizes) {
  std::size_t total = 0;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    total += layer_sizes[k] * layer_sizes[k + 1] + layer_sizes[k + 1];
  }
  return total;
}

ModelParams::ModelParams(LayerSizes layer_sizes) : sizes_(std::move(layer_sizes)) {
  check_layer_sizes(sizes_);
  std::size_t offset = 0;
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
    weight_offsets_.push_back(offset);
    offset += sizes_[k] * sizes_[k + 1] + sizes_[k + 1];
  }
  values_.assign(offset, 0.0);
}

ModelParams ModelParams::unflatten(std::span<const double> flat, LayerSizes layer_sizes) {
  ModelParams params(std::move(layer_sizes));
  if (flat.size() != params.parameter_count()) {
    throw std::invalid_argument("unflatten: vector has " + std::to_string(flat.size()) + " entries, architecture needs " +
                                std::to_string(params.parameter_count()));
  }
  std::copy(flat.begin(), flat.end(), params.values_.begin());
  return params;
}

std::span<double> ModelParams::weights(std::size_t layer) {
  return std::span<double>(values_).subspan(weight_offsets_.at(layer), sizes_[layer] * sizes_[layer + 1]);
}

std::span<const double> ModelParams::weights(std::size_t layer) const {
  return std::span<const double>(values_).subspan(weight_offsets_.at(layer), sizes_[layer] * sizes_[layer + 1]);
}

std::span<double> ModelParams::bias(std::size_t layer) {
  return std::span<double>(values_).subspan(weight_offsets_.at(layer) + sizes_[layer] * sizes_[layer + 1],
                                            sizes_[layer + 1]);
}

std::span<const double> ModelParams::bias(std::size_t layer) const {
  return std::span<const double>(values_).subspan(weight_offsets_.at(layer) + sizes_[layer] * sizes_[layer + 1],
                                                  sizes_[layer + 1]);
}

bool ModelParams::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void TrainingHyper::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw std::invalid_argument("adam_beta1 must lie in (0,1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw std::invalid_argument("adam_beta2 must lie in (0,1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
}

ModelParams init_model(const LayerSizes& layer_sizes, std::uint64_t seed) {
  check_layer_sizes(layer_sizes);
  if (layer_sizes.back() != kOutputWidth) {
    throw std::invalid_argument("init_model: output width must be " + std::to_string(kOutputWidth) + ", got " +
                                std::to_string(layer_sizes.back()));
  }
  ModelParams params(layer_sizes);
  Rng rng = make_rng(mix_seed(seed, salt::kModelInit));
  for (std::size_t k = 0; k < params.layer_count(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(params.in_width(k)));
    for (double& w : params.weights(k)) w = uniform(rng, -bound, bound);
  }
  return params;
}

std::vector<double> forward(const ModelParams& params, std::span<const float> image) {
  Activations acts;
  run_forward(params, image, acts);
  return std::move(acts.post.back());
}

double l1_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("l1_loss: length mismatch");
  if (pred.empty()) throw std::invalid_argument("l1_loss: empty vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(target[i] - pred[i]);
  return sum / static_cast<double>(pred.size());
}

double sample_loss(const ModelParams& params, const Sample& sample) {
  return l1_loss(forward(params, sample.image), sample.target);
}

double accumulate_gradient(const ModelParams& params, std::span<const Sample* const> batch, double scale,
                           std::span<double> grad_out) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  if (grad_out.size() != params.parameter_count()) throw std::invalid_argument("backward: gradient buffer size");

  const std::size_t layers = params.layer_count();
  const ModelParams& p = params;
  // Offsets of each layer inside the flat gradient mirror the parameter layout.
  std::vector<std::size_t> w_off(layers), b_off(layers);
  {
    const double* base = p.values().data();
    for (std::size_t k = 0; k < layers; ++k) {
      w_off[k] = static_cast<std::size_t>(p.weights(k).data() - base);
      b_off[k] = static_cast<std::size_t>(p.bias(k).data() - base);
    }
  }

  Activations acts;
  std::vector<double> delta, prev;
  double loss_sum = 0.0;
  const double batch_n = static_cast<double>(batch.size());

  for (const Sample* sample : batch) {
    run_forward(p, sample->image, acts);
    const std::vector<double>& out = acts.post.back();
    if (sample->target.size() != out.size()) throw std::invalid_argument("backward: target width mismatch");
    loss_sum += l1_loss(out, sample->target);

    const double coef = scale / (static_cast<double>(out.size()) * batch_n);
    delta.resize(out.size());
    for (std::size_t j = 0; j < out.size(); ++j) delta[j] = coef * sign_of(out[j] - sample->target[j]);

    for (std::size_t k = layers; k-- > 0;) {
      const std::size_t in = p.in_width(k);
      const std::size_t outw = p.out_width(k);
      const std::vector<double>& x = acts.post[k];
      const double* w = p.weights(k).data();
      double* gw = grad_out.data() + w_off[k];
      double* gb = grad_out.data() + b_off[k];
      if (k > 0) prev.assign(in, 0.0);
      for (std::size_t j = 0; j < outw; ++j) {
        const double d = delta[j];
        if (d == 0.0) continue;
        gb[j] += d;
        double* grow = gw + j * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
        if (k > 0) {
          const double* wrow = w + j * in;
          for (std::size_t i = 0; i < in; ++i) prev[i] += wrow[i] * d;
        }
      }
      if (k > 0) {
        const std::vector<double>& z = acts.pre[k - 1];
        for (std::size_t i = 0; i < in; ++i) prev[i] = z[i] > 0.0 ? prev[i] : 0.0;
        delta.swap(prev);
      }
    }
  }
  return loss_sum / batch_n;
}

std::vector<double> backward(const ModelParams& params, std::span<const Sample* const> batch, int loss_sign) {
  if (loss_sign != 1 && loss_sign != -1) throw std::invalid_argument("backward: loss_sign must be +1 or -1");
  std::vector<double> grad(params.parameter_count(), 0.0);
  accumulate_gradient(params, batch, static_cast<double>(loss_sign), grad);
  return grad;
}

std::vector<double> backward(const ModelParams& params, std::span<const Sample> batch, int loss_sign) {
  std::vector<const Sample*> refs;
  refs.reserve(batch.size());
  for (const Sample& s : batch) refs.push_back(&s);
  return backward(params, std::span<const Sample* const>(refs), loss_sign);
}

void adam_update(std::span<double> params, AdamState& state, std::span<const double> gradient,
                 const TrainingHyper& hyper) {
  if (gradient.size() != params.size()) throw std::invalid_argument("adam_step: gradient length mismatch");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state length mismatch");
  }
  for (double g : gradient) {
    if (!std::isfinite(g)) throw NonFiniteError("adam_step: non-finite gradient entry");
  }
  state.t += 1;
  const double b1 = hyper.adam_beta1;
  const double b2 = hyper.adam_beta2;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.adam_eps);
  }
}

std::pair<ModelParams, AdamState> adam_step(const ModelParams& params, const AdamState& state,
                                            std::span<const double> gradient, const TrainingHyper& hyper) {
  std::pair<ModelParams, AdamState> next{params, state};
  adam_update(next.first.values(), next.second, gradient, hyper);
  return next;
}

ModelParams train_with_gradient(const ModelParams& start, std::span<const Sample> data, const TrainingHyper& hyper,
                                std::uint64_t seed, const BatchGradientFn& gradient_fn) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  hyper.validate();
  ModelParams params = start;
  AdamState state = AdamState::fresh(params.parameter_count());
  Rng rng = make_rng(seed);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Sample*> batch;
  std::vector<double> grad(params.parameter_count());
  const auto batch_size = static_cast<std::size_t>(hyper.batch_size);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data[order[i]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      gradient_fn(params, batch, grad);
      adam_update(params.values(), state, grad, hyper);
    }
  }
  return params;
}

ModelParams train_honest(const ModelParams& start, std::span<const Sample> data, const TrainingHyper& hyper,
                         std::uint64_t seed) {
  return train_with_gradient(start, data, hyper, seed,
                             [](const ModelParams& p, std::span<const Sample* const> batch, std::span<double> grad) {
                               accumulate_gradient(p, batch, 1.0, grad);
                             });
}

double params_mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("params_mse: shape mismatch");
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double params_mse(const ModelParams& a, const ModelParams& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("params_mse: shape mismatch");
  return params_mse(a.values(), b.values());
}

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

}  // namespace flpoison
