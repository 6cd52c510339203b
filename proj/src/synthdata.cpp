#include "flpoison/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace flpoison {

namespace {

constexpr double kNearDistance = kTargetDistances.front();
constexpr double kFarDistance = kTargetDistances.back();
constexpr float kRoadSurface = 0.35F;
constexpr float kRoadEdge = 1.0F;

// Anti-aliased 1-pixel line profile.
float line_intensity(double column, double edge) {
  const double d = std::abs(column - edge);
  return d >= 1.0 ? 0.0F : static_cast<float>(1.0 - d);
}

}  // namespace

void SceneConfig::validate() const {
  if (height < 4) throw std::invalid_argument("image_height must be at least 4");
  if (width < 4) throw std::invalid_argument("image_width must be at least 4");
  if (!(curvature_max >= 0.0) || !std::isfinite(curvature_max)) {
    throw std::invalid_argument("curvature_max must be finite and non-negative");
  }
  if (!(noise_max >= 0.0 && noise_max <= 0.1)) throw std::invalid_argument("noise_max must lie in [0, 0.1]");
}

std::vector<double> trajectory_for_curvature(double curvature) {
  std::vector<double> target(kOutputWidth, 0.0);
  for (std::size_t i = 0; i < kTrajectoryPoints; ++i) {
    const double t = kTargetDistances[i];
    // (c*t^2, 0, t) divided by t.
    target[i * kCoordsPerPoint + kLateral] = curvature * t * t / t;
    target[i * kCoordsPerPoint + kHeight] = 0.0;
    target[i * kCoordsPerPoint + kForward] = 1.0;
  }
  return target;
}

std::vector<float> render_scene(double curvature, std::uint64_t noise_seed, const SceneConfig& config) {
  config.validate();
  const auto h = static_cast<std::size_t>(config.height);
  const auto w = static_cast<std::size_t>(config.width);
  const std::size_t plane = h * w;
  std::vector<float> image(kImageChannels * plane, 0.0F);
  Rng rng = make_rng(noise_seed);

  // Pixel columns per meter of lateral offset at the far end; chosen so the
  // largest curvature bends the road by 40% of the image width.
  const double lateral_scale =
      config.curvature_max > 0.0 ? 0.4 * static_cast<double>(w) / (config.curvature_max * kFarDistance * kFarDistance)
                                 : 0.0;
  const double center0 = 0.5 * static_cast<double>(w - 1);

  for (std::size_t r = 0; r < h; ++r) {
    // Bottom row is the near end, top row the far end.
    const double u = static_cast<double>(h - 1 - r) / static_cast<double>(h - 1);
    const double z = kNearDistance + u * (kFarDistance - kNearDistance);
    const double center = center0 + lateral_scale * curvature * z * z;
    const double half_width = 0.35 * static_cast<double>(w) * (1.0 - 0.75 * u);
    const double left = center - half_width;
    const double right = center + half_width;
    for (std::size_t col = 0; col < w; ++col) {
      const double x = static_cast<double>(col);
      float v = (x > left && x < right) ? kRoadSurface : 0.0F;
      v = std::max({v, kRoadEdge * line_intensity(x, left), kRoadEdge * line_intensity(x, right)});
      v += static_cast<float>(uniform(rng, 0.0, config.noise_max));
      v = std::clamp(v, 0.0F, 1.0F);
      for (std::size_t ch = 0; ch < kImageChannels; ++ch) image[ch * plane + r * w + col] = v;
    }
  }
  return image;
}

std::vector<Sample> generate_dataset(std::size_t n, std::uint64_t seed, const SceneConfig& config) {
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be positive");
  config.validate();
  std::vector<Sample> samples(n);
  Rng rng = make_rng(mix_seed(seed, salt::kDataset));
  for (std::size_t i = 0; i < n; ++i) {
    const double c = uniform(rng, -config.curvature_max, config.curvature_max);
    const std::uint64_t noise_seed = rng();
    samples[i].image = render_scene(c, noise_seed, config);
    samples[i].target = trajectory_for_curvature(c);
    samples[i].poisoned = false;
    samples[i].id = i;
  }
  return samples;
}

std::string to_string(TriggerPosition position) {
  switch (position) {
    case TriggerPosition::random:
      return "random";
    case TriggerPosition::top_left:
      return "top_left";
    case TriggerPosition::center:
      return "center";
  }
  return "random";
}

TriggerPosition trigger_position_from_string(const std::string& name) {
  if (name == "random") return TriggerPosition::random;
  if (name == "top_left") return TriggerPosition::top_left;
  if (name == "center") return TriggerPosition::center;
  throw std::invalid_argument("unknown trigger position '" + name + "'");
}

int TriggerSpec::side(int image_height) const {
  return std::max(1, static_cast<int>(std::lround(size_fraction * image_height)));
}

void TriggerSpec::validate(const SceneConfig& scene) const {
  if (!(size_fraction > 0.0 && size_fraction <= 1.0)) throw std::invalid_argument("trigger size_fraction must lie in (0,1]");
  for (float c : color) {
    if (!(c >= 0.0F && c <= 1.0F)) throw std::invalid_argument("trigger color channels must lie in [0,1]");
  }
  if (count < 1) throw std::invalid_argument("trigger count must be positive");
  const int s = side(scene.height);
  if (s > scene.height || s > scene.width) throw std::invalid_argument("trigger square does not fit in the image");
}

std::vector<float> inject_trigger(std::span<const float> image, const SceneConfig& scene, const TriggerSpec& spec,
                                  Rng& rng) {
  spec.validate(scene);
  if (image.size() != scene.image_length()) throw std::invalid_argument("inject_trigger: image size mismatch");
  const int s = spec.side(scene.height);
  const auto h = static_cast<std::size_t>(scene.height);
  const auto w = static_cast<std::size_t>(scene.width);
  std::vector<float> out(image.begin(), image.end());
  for (int k = 0; k < spec.count; ++k) {
    std::size_t top = 0;
    std::size_t left = 0;
    switch (spec.position) {
      case TriggerPosition::top_left:
        break;
      case TriggerPosition::center:
        top = (h - static_cast<std::size_t>(s)) / 2;
        left = (w - static_cast<std::size_t>(s)) / 2;
        break;
      case TriggerPosition::random:
        top = uniform_index(rng, h - static_cast<std::size_t>(s) + 1);
        left = uniform_index(rng, w - static_cast<std::size_t>(s) + 1);
        break;
    }
    for (std::size_t ch = 0; ch < kImageChannels; ++ch) {
      for (std::size_t r = top; r < top + static_cast<std::size_t>(s); ++r) {
        for (std::size_t c = left; c < left + static_cast<std::size_t>(s); ++c) out[ch * h * w + r * w + c] = spec.color[ch];
      }
    }
  }
  return out;
}

std::vector<double> make_turn_target(std::span<const double> target, double turn_magnitude, int direction) {
  if (target.size() != kOutputWidth) throw std::invalid_argument("make_turn_target: expected 51 entries");
  if (direction != 1 && direction != -1) throw std::invalid_argument("make_turn_target: direction must be +1 or -1");
  std::vector<double> out(target.begin(), target.end());
  for (std::size_t point = 13; point <= kTrajectoryPoints; ++point) {
    const double ramp = static_cast<double>(point - 12) / 5.0;
    out[(point - 1) * kCoordsPerPoint + kLateral] += direction * turn_magnitude * ramp;
  }
  return out;
}

std::vector<Sample> build_backdoor_testset(std::span<const Sample> test, const TriggerSpec& spec, std::uint64_t seed,
                                           const SceneConfig& scene) {
  Rng rng = make_rng(mix_seed(seed, salt::kBackdoorTest));
  std::vector<Sample> out;
  out.reserve(test.size());
  for (const Sample& s : test) {
    Sample triggered = s;
    triggered.image = inject_trigger(s.image, scene, spec, rng);
    triggered.poisoned = true;
    out.push_back(std::move(triggered));
  }
  return out;
}

std::vector<double> denormalize(std::span<const double> target) {
  if (target.size() != kOutputWidth) throw std::invalid_argument("denormalize: expected 51 entries");
  std::vector<double> out(kOutputWidth);
  for (std::size_t i = 0; i < kTrajectoryPoints; ++i) {
    for (std::size_t j = 0; j < kCoordsPerPoint; ++j) {
      out[i * kCoordsPerPoint + j] = target[i * kCoordsPerPoint + j] * kTargetDistances[i];
    }
  }
  return out;
}

const std::vector<Sample>& DatasetSplit::cell(std::size_t round, std::size_t client) const {
  if (round >= rounds || client >= clients) throw std::out_of_range("DatasetSplit::cell index out of range");
  return cells[round * clients + client];
}

DatasetSplit split_dataset(std::vector<Sample> all, std::size_t rounds, std::size_t clients, std::size_t per_client,
                           std::size_t test_n, std::size_t defense_n, std::uint64_t seed, const SceneConfig& scene,
                           const TriggerSpec& trigger) {
  const std::size_t needed = rounds * clients * per_client + test_n + defense_n;
  if (all.size() < needed) {
    throw std::invalid_argument("split_dataset: need " + std::to_string(needed) + " samples, got " +
                                std::to_string(all.size()));
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(mix_seed(seed, salt::kSplit));
  shuffle(order, rng);

  DatasetSplit split;
  split.rounds = rounds;
  split.clients = clients;
  split.cells.resize(rounds * clients);
  std::size_t next = 0;
  for (auto& cell : split.cells) {
    cell.reserve(per_client);
    for (std::size_t k = 0; k < per_client; ++k) cell.push_back(std::move(all[order[next++]]));
  }
  for (std::size_t k = 0; k < test_n; ++k) split.test.push_back(std::move(all[order[next++]]));
  for (std::size_t k = 0; k < defense_n; ++k) split.defense.push_back(std::move(all[order[next++]]));
  split.backdoor_test = build_backdoor_testset(split.test, trigger, seed, scene);
  return split;
}

}  // namespace flpoison
