#include <gtest/gtest.h>

#include <omp.h>

#include "flpoison/kernels.hpp"
#include "helpers.hpp"

using namespace flpoison;
using flpoison::testing::random_model;
using flpoison::testing::random_samples;

namespace {

struct VectorSet {
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> views;
};

VectorSet random_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
  VectorSet set;
  Rng rng = make_rng(seed);
  set.storage.assign(n, std::vector<double>(dim));
  for (auto& v : set.storage) {
    for (double& x : v) x = uniform(rng, -10.0, 10.0);
  }
  for (const auto& v : set.storage) set.views.emplace_back(v);
  return set;
}

class KernelThreads : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = kernels::thread_count();
    kernels::set_thread_count(GetParam());
  }
  void TearDown() override { kernels::set_thread_count(saved_); }

 private:
  int saved_ = 1;
};

}  // namespace

TEST_P(KernelThreads, LossesBitIdenticalToSerial) {
  const auto params = random_model({12, 9, 51}, 1);
  const auto data = random_samples(57, 12, 2);
  EXPECT_EQ(kernels::parallel::per_sample_losses(params, data), kernels::serial::per_sample_losses(params, data));
  EXPECT_EQ(kernels::parallel::mean_l1_loss(params, data), kernels::serial::mean_l1_loss(params, data));
}

TEST_P(KernelThreads, ReductionsBitIdenticalToSerial) {
  const auto set = random_vectors(9, 1001, 3);
  EXPECT_EQ(kernels::parallel::coordinate_mean(set.views), kernels::serial::coordinate_mean(set.views));
  EXPECT_EQ(kernels::parallel::coordinate_trimmed_mean(set.views, 2),
            kernels::serial::coordinate_trimmed_mean(set.views, 2));
  EXPECT_EQ(kernels::parallel::pairwise_sq_distances(set.views), kernels::serial::pairwise_sq_distances(set.views));
  EXPECT_EQ(kernels::parallel::gram_matrix(set.views), kernels::serial::gram_matrix(set.views));
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelThreads, ::testing::Values(1, 2, 4));

TEST(Kernels, MeanOfIdenticalVectorsIsExact) {
  const auto set = random_vectors(1, 500, 4);
  std::vector<std::span<const double>> copies(7, set.views.front());
  EXPECT_EQ(kernels::coordinate_mean(copies), set.storage.front());
  EXPECT_EQ(kernels::coordinate_trimmed_mean(copies, 3), set.storage.front());
}

TEST(Kernels, TrimmedMeanDropsExtremes) {
  std::vector<std::vector<double>> rows;
  for (int v = 1; v <= 10; ++v) rows.push_back({static_cast<double>(v), static_cast<double>(11 - v)});
  std::vector<std::span<const double>> views(rows.begin(), rows.end());
  const auto out = kernels::coordinate_trimmed_mean(views, 2);
  EXPECT_EQ(out[0], 5.5);
  EXPECT_EQ(out[1], 5.5);
  EXPECT_THROW(kernels::coordinate_trimmed_mean(views, 5), std::invalid_argument);
}

TEST(Kernels, DistancesAndGramAgreeWithDefinition) {
  const auto set = random_vectors(4, 6, 5);
  const auto d = kernels::pairwise_sq_distances(set.views);
  const auto g = kernels::gram_matrix(set.views);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(d[i * 4 + i], 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      double dd = 0.0;
      double dot = 0.0;
      for (std::size_t k = 0; k < 6; ++k) {
        dd += (set.storage[i][k] - set.storage[j][k]) * (set.storage[i][k] - set.storage[j][k]);
        dot += set.storage[i][k] * set.storage[j][k];
      }
      EXPECT_NEAR(d[i * 4 + j], dd, 1e-9);
      EXPECT_NEAR(g[i * 4 + j], dot, 1e-9);
      EXPECT_EQ(d[i * 4 + j], d[j * 4 + i]);
    }
  }
}

TEST(Kernels, EmptyInputsRejected) {
  const auto params = random_model({3, 51}, 1);
  EXPECT_THROW(kernels::mean_l1_loss(params, std::span<const Sample>{}), std::invalid_argument);
  EXPECT_THROW(kernels::coordinate_mean(kernels::VectorViews{}), std::invalid_argument);
}
