#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flpoison/rng.hpp"
#include "flpoison/sample.hpp"

namespace flpoison {

inline constexpr std::size_t kImageChannels = 3;

/// Synthetic road-scene generator settings.
///
/// A scene is a dark background with a road whose centerline follows
/// x = c * z^2 over the forward range of kTargetDistances. Images are stored
/// channel-major (CHW).
struct SceneConfig {
  int height = 32;
  int width = 32;
  double curvature_max = 0.005;  // c is drawn from [-curvature_max, curvature_max]
  double noise_max = 0.1;        // per-pixel additive noise in [0, noise_max]

  std::size_t image_length() const {
    return kImageChannels * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  void validate() const;
  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

// Normalized ground truth for curvature c: point i is (c*t_i, 0, 1).
std::vector<double> trajectory_for_curvature(double curvature);

// Deterministic in (curvature, noise_seed, config).
std::vector<float> render_scene(double curvature, std::uint64_t noise_seed, const SceneConfig& config);

std::vector<Sample> generate_dataset(std::size_t n, std::uint64_t seed, const SceneConfig& config = {});

enum class TriggerPosition { random, top_left, center };

std::string to_string(TriggerPosition position);
TriggerPosition trigger_position_from_string(const std::string& name);

struct TriggerSpec {
  double size_fraction = 0.10;  // square side as a fraction of image height
  std::array<float, 3> color = {1.0F, 0.0F, 0.0F};
  TriggerPosition position = TriggerPosition::random;
  int count = 1;

  // Side length in pixels for an image of the given height.
  int side(int image_height) const;
  void validate(const SceneConfig& scene) const;
  friend bool operator==(const TriggerSpec&, const TriggerSpec&) = default;
};

/// Returns a copy of `image` with `spec.count` solid squares painted in
/// spec.color. Only the square pixels change.
std::vector<float> inject_trigger(std::span<const float> image, const SceneConfig& scene, const TriggerSpec& spec,
                                  Rng& rng);

/// Bends the last five trajectory points sideways: point i (1-based, 13..17)
/// gets direction * magnitude * (i - 12) / 5 added to its lateral coordinate.
std::vector<double> make_turn_target(std::span<const double> target, double turn_magnitude, int direction = 1);

// Every image triggered, targets kept, flags set.
std::vector<Sample> build_backdoor_testset(std::span<const Sample> test, const TriggerSpec& spec, std::uint64_t seed,
                                           const SceneConfig& scene);

// Multiplies every coordinate of point i by t_i (meters).
std::vector<double> denormalize(std::span<const double> target);

/// Training cells per (round, client) plus held-out sets.
struct DatasetSplit {
  std::size_t rounds = 0;
  std::size_t clients = 0;
  std::vector<std::vector<Sample>> cells;  // row-major rounds x clients
  std::vector<Sample> test;
  std::vector<Sample> defense;
  std::vector<Sample> backdoor_test;

  const std::vector<Sample>& cell(std::size_t round, std::size_t client) const;
};

/// Seeded random partition of `all`. Leftover samples are discarded.
/// The backdoor test set is derived from the test set with `trigger`.
DatasetSplit split_dataset(std::vector<Sample> all, std::size_t rounds, std::size_t clients, std::size_t per_client,
                           std::size_t test_n, std::size_t defense_n, std::uint64_t seed,
                           const SceneConfig& scene = {}, const TriggerSpec& trigger = {});

// Flat record stream: header (magic, version, count, seed, image length,
// target length) followed by image floats, target doubles and a flag byte per
// record. All values little-endian. See docs/dataset_format.md.
void write_dataset(const std::string& path, std::span<const Sample> samples, std::uint64_t seed);
std::vector<Sample> read_dataset(const std::string& path, std::uint64_t* seed_out = nullptr);

}  // namespace flpoison
