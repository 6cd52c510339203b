#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flpoison/federation.hpp"
#include "flpoison/rng.hpp"

namespace flpoison::testing {

// Few rounds, 8x8 images, one small hidden layer: runs in well under a second.
inline FederationConfig tiny_config() {
  FederationConfig c;
  c.rounds = 3;
  c.total_clients = 8;
  c.malicious_count = 2;
  c.sampled_per_round = 6;
  c.per_client = 4;
  c.test_n = 20;
  c.defense_n = 8;
  c.scene.height = 8;
  c.scene.width = 8;
  c.hidden_layers = {8};
  c.defense.f = 1;
  c.defense.m = 3;
  c.defense.beta = 1;
  c.defense.n_exclude = 2;
  c.score_window = 2;
  return c;
}

// Random images in [0,1] and random targets; only the shapes matter.
inline std::vector<Sample> random_samples(std::size_t n, std::size_t image_length, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<Sample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].image.resize(image_length);
    for (float& v : out[i].image) v = static_cast<float>(uniform01(rng));
    out[i].target.resize(kOutputWidth);
    for (double& t : out[i].target) t = uniform(rng, -1.0, 1.0);
    out[i].id = i;
  }
  return out;
}

inline ModelParams random_model(const LayerSizes& sizes, std::uint64_t seed, double scale = 0.5) {
  ModelParams p(sizes);
  Rng rng = make_rng(seed);
  for (double& v : p.values()) v = uniform(rng, -scale, scale);
  return p;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("flpoison_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace flpoison::testing
