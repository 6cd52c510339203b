#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flpoison/nn.hpp"
#include "flpoison/sample.hpp"

// Data-parallel building blocks shared by the defenses and the federation
// loop. Each kernel exists twice: a plain serial loop kept as the reference,
// and an OpenMP version. The parallel versions split work only along
// independent axes (samples, coordinates, rows) and reduce in a fixed order,
// so their results are bit-identical to the serial reference regardless of
// thread count.
namespace flpoison::kernels {

using VectorViews = std::span<const std::span<const double>>;

namespace serial {
std::vector<double> per_sample_losses(const ModelParams& params, std::span<const Sample> data);
double mean_l1_loss(const ModelParams& params, std::span<const Sample> data);
std::vector<double> coordinate_mean(VectorViews vectors);
std::vector<double> coordinate_trimmed_mean(VectorViews vectors, std::size_t trim_each_side);
// Row-major n x n matrix of squared euclidean distances.
std::vector<double> pairwise_sq_distances(VectorViews vectors);
// Row-major n x n matrix of inner products.
std::vector<double> gram_matrix(VectorViews vectors);
}  // namespace serial

namespace parallel {
std::vector<double> per_sample_losses(const ModelParams& params, std::span<const Sample> data);
double mean_l1_loss(const ModelParams& params, std::span<const Sample> data);
std::vector<double> coordinate_mean(VectorViews vectors);
std::vector<double> coordinate_trimmed_mean(VectorViews vectors, std::size_t trim_each_side);
std::vector<double> pairwise_sq_distances(VectorViews vectors);
std::vector<double> gram_matrix(VectorViews vectors);
}  // namespace parallel

// Default entry points used by the library.
using parallel::coordinate_mean;
using parallel::coordinate_trimmed_mean;
using parallel::gram_matrix;
using parallel::mean_l1_loss;
using parallel::pairwise_sq_distances;
using parallel::per_sample_losses;

// Number of OpenMP threads used by the parallel kernels (and client training).
void set_thread_count(int threads);
int thread_count();

}  // namespace flpoison::kernels
