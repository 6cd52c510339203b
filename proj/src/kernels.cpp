#include "flpoison/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <stdexcept>

namespace flpoison::kernels {

namespace {

std::size_t common_length(VectorViews vectors) {
  if (vectors.empty()) throw std::invalid_argument("kernel: no input vectors");
  const std::size_t d = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != d) throw std::invalid_argument("kernel: input vectors differ in length");
  }
  return d;
}

double sum_in_order(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum;
}

// Mean of coordinate k computed relative to the first vector, so that n equal
// values average to exactly that value.
double shifted_mean(VectorViews vectors, std::size_t k) {
  const double anchor = vectors[0][k];
  double sum = 0.0;
  for (std::size_t i = 1; i < vectors.size(); ++i) sum += vectors[i][k] - anchor;
  return anchor + sum / static_cast<double>(vectors.size());
}

double trimmed_mean_of(std::vector<double>& column, std::size_t trim) {
  std::sort(column.begin(), column.end());
  const double anchor = column[trim];
  double sum = 0.0;
  for (std::size_t i = trim + 1; i < column.size() - trim; ++i) sum += column[i] - anchor;
  return anchor + sum / static_cast<double>(column.size() - 2 * trim);
}

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    sum += d * d;
  }
  return sum;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += a[k] * b[k];
  return sum;
}

}  // namespace

namespace serial {

std::vector<double> per_sample_losses(const ModelParams& params, std::span<const Sample> data) {
  std::vector<double> losses(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) losses[i] = sample_loss(params, data[i]);
  return losses;
}

double mean_l1_loss(const ModelParams& params, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("loss_of: empty dataset");
  return sum_in_order(per_sample_losses(params, data)) / static_cast<double>(data.size());
}

std::vector<double> coordinate_mean(VectorViews vectors) {
  const std::size_t d = common_length(vectors);
  std::vector<double> out(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) out[k] = shifted_mean(vectors, k);
  return out;
}

std::vector<double> coordinate_trimmed_mean(VectorViews vectors, std::size_t trim_each_side) {
  const std::size_t d = common_length(vectors);
  if (vectors.size() <= 2 * trim_each_side) throw std::invalid_argument("trimmed mean: n must exceed 2*beta");
  std::vector<double> out(d);
  std::vector<double> column(vectors.size());
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < vectors.size(); ++i) column[i] = vectors[i][k];
    out[k] = trimmed_mean_of(column, trim_each_side);
  }
  return out;
}

std::vector<double> pairwise_sq_distances(VectorViews vectors) {
  common_length(vectors);
  const std::size_t n = vectors.size();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      out[i * n + j] = out[j * n + i] = sq_distance(vectors[i], vectors[j]);
    }
  }
  return out;
}

std::vector<double> gram_matrix(VectorViews vectors) {
  common_length(vectors);
  const std::size_t n = vectors.size();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) out[i * n + j] = out[j * n + i] = dot(vectors[i], vectors[j]);
  }
  return out;
}

}  // namespace serial

namespace parallel {

std::vector<double> per_sample_losses(const ModelParams& params, std::span<const Sample> data) {
  std::vector<double> losses(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) losses[i] = sample_loss(params, data[i]);
  return losses;
}

double mean_l1_loss(const ModelParams& params, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("loss_of: empty dataset");
  return sum_in_order(per_sample_losses(params, data)) / static_cast<double>(data.size());
}

std::vector<double> coordinate_mean(VectorViews vectors) {
  const std::size_t d = common_length(vectors);
  std::vector<double> out(d, 0.0);
  const auto dd = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < dd; ++k) out[k] = shifted_mean(vectors, static_cast<std::size_t>(k));
  return out;
}

std::vector<double> coordinate_trimmed_mean(VectorViews vectors, std::size_t trim_each_side) {
  const std::size_t d = common_length(vectors);
  if (vectors.size() <= 2 * trim_each_side) throw std::invalid_argument("trimmed mean: n must exceed 2*beta");
  std::vector<double> out(d);
  const auto dd = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel
  {
    std::vector<double> column(vectors.size());
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < dd; ++k) {
      for (std::size_t i = 0; i < vectors.size(); ++i) column[i] = vectors[i][k];
      out[k] = trimmed_mean_of(column, trim_each_side);
    }
  }
  return out;
}

std::vector<double> pairwise_sq_distances(VectorViews vectors) {
  common_length(vectors);
  const std::size_t n = vectors.size();
  std::vector<double> out(n * n, 0.0);
  const auto pairs = static_cast<std::ptrdiff_t>(n * n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < pairs; ++p) {
    const std::size_t i = static_cast<std::size_t>(p) / n;
    const std::size_t j = static_cast<std::size_t>(p) % n;
    if (j > i) out[i * n + j] = sq_distance(vectors[i], vectors[j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) out[i * n + j] = out[j * n + i];
  }
  return out;
}

std::vector<double> gram_matrix(VectorViews vectors) {
  common_length(vectors);
  const std::size_t n = vectors.size();
  std::vector<double> out(n * n, 0.0);
  const auto pairs = static_cast<std::ptrdiff_t>(n * n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < pairs; ++p) {
    const std::size_t i = static_cast<std::size_t>(p) / n;
    const std::size_t j = static_cast<std::size_t>(p) % n;
    if (j >= i) out[i * n + j] = dot(vectors[i], vectors[j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) out[i * n + j] = out[j * n + i];
  }
  return out;
}

}  // namespace parallel

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace flpoison::kernels
