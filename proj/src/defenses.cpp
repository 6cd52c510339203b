#include "flpoison/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flpoison/kernels.hpp"
#include "flpoison/rng.hpp"

namespace flpoison {

namespace {

// Updates ordered by client id; every defense works on this order so that
// results do not depend on submission order.
std::vector<const ClientUpdate*> sorted_by_id(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregation: no client updates");
  std::vector<const ClientUpdate*> sorted;
  sorted.reserve(updates.size());
  for (const ClientUpdate& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->client_id == sorted[i - 1]->client_id) throw std::invalid_argument("aggregation: duplicate client id");
    if (!sorted[i]->params.same_shape(sorted[0]->params)) throw std::invalid_argument("aggregation: model shape mismatch");
  }
  return sorted;
}

std::vector<std::span<const double>> views_of(const std::vector<const ClientUpdate*>& updates) {
  std::vector<std::span<const double>> views;
  views.reserve(updates.size());
  for (const ClientUpdate* u : updates) views.push_back(u->flat());
  return views;
}

ModelParams mean_model(const std::vector<const ClientUpdate*>& updates) {
  const auto views = views_of(updates);
  return ModelParams::unflatten(kernels::coordinate_mean(views), updates.front()->params.layer_sizes());
}

// Splits updates into kept/excluded given the ids to exclude.
AggregationOutcome average_excluding(const std::vector<const ClientUpdate*>& sorted, std::vector<int> excluded) {
  std::sort(excluded.begin(), excluded.end());
  std::vector<const ClientUpdate*> kept;
  for (const ClientUpdate* u : sorted) {
    if (!std::binary_search(excluded.begin(), excluded.end(), u->client_id)) kept.push_back(u);
  }
  AggregationOutcome outcome;
  outcome.global = mean_model(kept);
  outcome.excluded_ids = std::move(excluded);
  return outcome;
}

// Ids of the `count` highest-scoring updates; ties exclude higher ids first.
std::vector<int> highest_scores(const std::vector<const ClientUpdate*>& sorted, const std::vector<double>& scores,
                                std::size_t count) {
  std::vector<std::size_t> idx(sorted.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return sorted[a]->client_id > sorted[b]->client_id;
  });
  std::vector<int> ids;
  for (std::size_t k = 0; k < count; ++k) ids.push_back(sorted[idx[k]]->client_id);
  return ids;
}

void require_exclusion_count(std::size_t n, int n_exclude, const char* who) {
  if (n_exclude < 0) throw std::invalid_argument(std::string(who) + ": n_exclude must be non-negative");
  if (n <= static_cast<std::size_t>(n_exclude)) {
    throw std::invalid_argument(std::string(who) + ": need more than n_exclude=" + std::to_string(n_exclude) +
                                " updates, got " + std::to_string(n));
  }
}

std::vector<double> krum_score_vector(const std::vector<const ClientUpdate*>& sorted, int f) {
  const std::size_t n = sorted.size();
  if (f < 0) throw std::invalid_argument("krum: f must be non-negative");
  if (n < static_cast<std::size_t>(f) + 3) {
    throw std::invalid_argument("krum: need at least f+3=" + std::to_string(f + 3) + " updates, got " +
                                std::to_string(n));
  }
  const std::size_t neighbours = n - static_cast<std::size_t>(f) - 2;
  const auto views = views_of(sorted);
  const std::vector<double> dist = kernels::pairwise_sq_distances(views);
  std::vector<double> scores(n);
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(dist[i * n + j]);
    }
    std::sort(row.begin(), row.end());
    scores[i] = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours), 0.0);
  }
  return scores;
}

std::map<int, double> score_map(const std::vector<const ClientUpdate*>& sorted, const std::vector<double>& scores) {
  std::map<int, double> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) out[sorted[i]->client_id] = scores[i];
  return out;
}

// Symmetric power iteration with a fixed start vector.
std::pair<double, std::vector<double>> top_eigenpair(const std::vector<double>& matrix, std::size_t n, int iterations,
                                                     double tolerance) {
  std::vector<double> v(n);
  Rng rng = make_rng(0x70636131);
  for (double& x : v) x = uniform(rng, 0.5, 1.5);
  double norm = l2_norm(v);
  for (double& x : v) x /= norm;

  std::vector<double> w(n);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += matrix[i * n + j] * v[j];
      w[i] = acc;
    }
    norm = l2_norm(w);
    if (norm == 0.0) return {0.0, v};
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] /= norm;
      change += (w[i] - v[i]) * (w[i] - v[i]);
    }
    v.swap(w);
    if (std::sqrt(change) < tolerance) break;
  }
  // Rayleigh quotient.
  double lambda = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += matrix[i * n + j] * v[j];
    lambda += v[i] * acc;
  }
  return {std::max(lambda, 0.0), v};
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::string to_string(DefenseTag tag) {
  switch (tag) {
    case DefenseTag::fedavg:
      return "fedavg";
    case DefenseTag::krum:
      return "krum";
    case DefenseTag::multi_krum:
      return "multi_krum";
    case DefenseTag::trimmed_mean:
      return "trimmed_mean";
    case DefenseTag::fltrust:
      return "fltrust";
    case DefenseTag::lfr:
      return "lfr";
    case DefenseTag::loss_defense:
      return "loss_defense";
    case DefenseTag::pca_defense:
      return "pca_defense";
    case DefenseTag::loss_fusion:
      return "loss_fusion";
  }
  return "fedavg";
}

DefenseTag defense_tag_from_string(const std::string& name) {
  for (DefenseTag tag : all_defense_tags()) {
    if (to_string(tag) == name) return tag;
  }
  throw std::invalid_argument("unknown defense kind '" + name + "'");
}

const std::vector<DefenseTag>& all_defense_tags() {
  static const std::vector<DefenseTag> tags = {
      DefenseTag::fedavg, DefenseTag::krum,         DefenseTag::multi_krum,  DefenseTag::lfr,        DefenseTag::fltrust,
      DefenseTag::pca_defense, DefenseTag::loss_defense, DefenseTag::trimmed_mean, DefenseTag::loss_fusion};
  return tags;
}

void DefenseKind::validate() const {
  if (f < 0) throw std::invalid_argument("defense.f must be non-negative");
  if (m < 1) throw std::invalid_argument("defense.m must be positive");
  if (beta < 0) throw std::invalid_argument("defense.beta must be non-negative");
  if (n_exclude < 0) throw std::invalid_argument("defense.n_exclude must be non-negative");
}

double loss_of(const ModelParams& params, std::span<const Sample> dataset) {
  return kernels::mean_l1_loss(params, dataset);
}

AggregationOutcome fedavg(std::span<const ClientUpdate> updates) {
  const auto sorted = sorted_by_id(updates);
  AggregationOutcome outcome;
  outcome.global = mean_model(sorted);
  return outcome;
}

std::map<int, double> krum_scores(std::span<const ClientUpdate> updates, int f) {
  const auto sorted = sorted_by_id(updates);
  return score_map(sorted, krum_score_vector(sorted, f));
}

AggregationOutcome multi_krum(std::span<const ClientUpdate> updates, int f, int m) {
  const auto sorted = sorted_by_id(updates);
  if (m < 1 || static_cast<std::size_t>(m) > sorted.size()) {
    throw std::invalid_argument("multi_krum: m must lie in [1, n]");
  }
  const std::vector<double> scores = krum_score_vector(sorted, f);
  // Excluding the n - m highest scores keeps the m lowest, lower ids first on ties.
  AggregationOutcome outcome =
      average_excluding(sorted, highest_scores(sorted, scores, sorted.size() - static_cast<std::size_t>(m)));
  outcome.per_client_scores = score_map(sorted, scores);
  return outcome;
}

AggregationOutcome krum(std::span<const ClientUpdate> updates, int f) { return multi_krum(updates, f, 1); }

AggregationOutcome trimmed_mean(std::span<const ClientUpdate> updates, int beta) {
  const auto sorted = sorted_by_id(updates);
  if (beta < 0) throw std::invalid_argument("trimmed_mean: beta must be non-negative");
  if (sorted.size() <= 2 * static_cast<std::size_t>(beta)) {
    throw std::invalid_argument("trimmed_mean: need more than 2*beta=" + std::to_string(2 * beta) + " updates, got " +
                                std::to_string(sorted.size()));
  }
  const auto views = views_of(sorted);
  AggregationOutcome outcome;
  outcome.global = ModelParams::unflatten(kernels::coordinate_trimmed_mean(views, static_cast<std::size_t>(beta)),
                                          sorted.front()->params.layer_sizes());
  return outcome;
}

AggregationOutcome fltrust_aggregate(std::span<const ClientUpdate> updates, const ModelParams& global_before,
                                     std::span<const double> server_delta) {
  const auto sorted = sorted_by_id(updates);
  const std::size_t p = global_before.parameter_count();
  if (server_delta.size() != p || !sorted.front()->params.same_shape(global_before)) {
    throw std::invalid_argument("fltrust: shape mismatch");
  }
  const double server_norm = l2_norm(server_delta);
  const auto base = global_before.values();

  std::vector<double> weighted(p, 0.0);
  std::vector<double> delta(p);
  double trust_sum = 0.0;
  AggregationOutcome outcome;
  for (const ClientUpdate* u : sorted) {
    const auto flat = u->flat();
    for (std::size_t k = 0; k < p; ++k) delta[k] = flat[k] - base[k];
    const double trust = std::max(0.0, cosine_similarity(delta, server_delta));
    outcome.per_client_scores[u->client_id] = trust;
    const double norm = l2_norm(delta);
    if (trust == 0.0 || norm == 0.0) continue;
    const double coef = trust * server_norm / norm;
    for (std::size_t k = 0; k < p; ++k) weighted[k] += coef * delta[k];
    trust_sum += trust;
  }
  outcome.global = global_before;
  if (trust_sum > 0.0) {
    auto out = outcome.global.values();
    for (std::size_t k = 0; k < p; ++k) out[k] += weighted[k] / trust_sum;
  }
  return outcome;
}

AggregationOutcome fltrust(std::span<const ClientUpdate> updates, const ModelParams& global_before,
                           std::span<const Sample> defense_set, const TrainingHyper& hyper, std::uint64_t seed) {
  if (defense_set.empty()) throw std::invalid_argument("fltrust: empty defense set");
  const ModelParams server = train_honest(global_before, defense_set, hyper, seed);
  std::vector<double> server_delta(global_before.parameter_count());
  const auto after = server.values();
  const auto before = global_before.values();
  for (std::size_t k = 0; k < server_delta.size(); ++k) server_delta[k] = after[k] - before[k];
  return fltrust_aggregate(updates, global_before, server_delta);
}

AggregationOutcome loss_defense(std::span<const ClientUpdate> updates, std::span<const Sample> defense_set,
                                int n_exclude) {
  const auto sorted = sorted_by_id(updates);
  require_exclusion_count(sorted.size(), n_exclude, "loss_defense");
  if (defense_set.empty()) throw std::invalid_argument("loss_defense: empty defense set");
  std::vector<double> losses(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) losses[i] = loss_of(sorted[i]->params, defense_set);
  AggregationOutcome outcome =
      average_excluding(sorted, highest_scores(sorted, losses, static_cast<std::size_t>(n_exclude)));
  outcome.per_client_scores = score_map(sorted, losses);
  return outcome;
}

AggregationOutcome lfr(std::span<const ClientUpdate> updates, std::span<const Sample> defense_set, int n_exclude) {
  const auto sorted = sorted_by_id(updates);
  require_exclusion_count(sorted.size(), n_exclude, "lfr");
  if (defense_set.empty()) throw std::invalid_argument("lfr: empty defense set");
  const std::size_t n = sorted.size();

  const double loss_all = loss_of(mean_model(sorted), defense_set);
  std::vector<double> impact(n, 0.0);
  if (n > 1) {
    const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < nn; ++i) {
      std::vector<const ClientUpdate*> others;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != static_cast<std::size_t>(i)) others.push_back(sorted[j]);
      }
      impact[i] = loss_all - loss_of(mean_model(others), defense_set);
    }
  }
  AggregationOutcome outcome =
      average_excluding(sorted, highest_scores(sorted, impact, static_cast<std::size_t>(n_exclude)));
  outcome.per_client_scores = score_map(sorted, impact);
  return outcome;
}

PrincipalProjection principal_projection(std::span<const std::span<const double>> vectors, int iterations,
                                         double tolerance) {
  if (vectors.empty()) throw std::invalid_argument("principal_projection: no vectors");
  const std::size_t n = vectors.size();
  const std::vector<double> mean = kernels::coordinate_mean(vectors);
  std::vector<std::vector<double>> centered(n, std::vector<double>(mean.size()));
  std::vector<std::span<const double>> views;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < mean.size(); ++k) centered[i][k] = vectors[i][k] - mean[k];
    views.emplace_back(centered[i]);
  }
  std::vector<double> gram = kernels::gram_matrix(views);

  PrincipalProjection out;
  out.coords.assign(n, {0.0, 0.0});
  for (std::size_t c = 0; c < 2; ++c) {
    auto [lambda, u] = top_eigenpair(gram, n, iterations, tolerance);
    out.eigenvalues[c] = lambda;
    // X v_c = sqrt(lambda) u_c for the unit right singular vector v_c.
    const double scale = std::sqrt(lambda);
    for (std::size_t i = 0; i < n; ++i) out.coords[i][c] = scale * u[i];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) gram[i * n + j] -= lambda * u[i] * u[j];
    }
  }
  return out;
}

AggregationOutcome pca_defense(std::span<const ClientUpdate> updates, int n_exclude) {
  const auto sorted = sorted_by_id(updates);
  require_exclusion_count(sorted.size(), n_exclude, "pca_defense");
  const auto views = views_of(sorted);
  const PrincipalProjection proj = principal_projection(views);

  std::array<double, 2> median{};
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> column;
    for (const auto& p : proj.coords) column.push_back(p[c]);
    median[c] = median_of(std::move(column));
  }
  std::vector<double> distance(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double dx = proj.coords[i][0] - median[0];
    const double dy = proj.coords[i][1] - median[1];
    distance[i] = std::sqrt(dx * dx + dy * dy);
  }
  AggregationOutcome outcome =
      average_excluding(sorted, highest_scores(sorted, distance, static_cast<std::size_t>(n_exclude)));
  outcome.per_client_scores = score_map(sorted, distance);
  return outcome;
}

AggregationOutcome loss_fusion(std::span<const ClientUpdate> updates, std::span<const Sample> defense_set,
                               int n_exclude) {
  AggregationOutcome by_impact = lfr(updates, defense_set, n_exclude);
  AggregationOutcome by_loss = loss_defense(updates, defense_set, n_exclude);
  if (loss_of(by_impact.global, defense_set) < loss_of(by_loss.global, defense_set)) return by_impact;
  return by_loss;
}

AggregationOutcome aggregate(const DefenseKind& kind, std::span<const ClientUpdate> updates,
                             const DefenseContext& context) {
  switch (kind.tag) {
    case DefenseTag::fedavg:
      return fedavg(updates);
    case DefenseTag::krum:
      return krum(updates, kind.f);
    case DefenseTag::multi_krum:
      return multi_krum(updates, kind.f, kind.m);
    case DefenseTag::trimmed_mean:
      return trimmed_mean(updates, kind.beta);
    case DefenseTag::fltrust:
      if (context.global_before == nullptr) throw std::invalid_argument("fltrust: missing pre-round global model");
      return fltrust(updates, *context.global_before, context.defense_set, context.hyper, context.seed);
    case DefenseTag::lfr:
      return lfr(updates, context.defense_set, kind.n_exclude);
    case DefenseTag::loss_defense:
      return loss_defense(updates, context.defense_set, kind.n_exclude);
    case DefenseTag::pca_defense:
      return pca_defense(updates, kind.n_exclude);
    case DefenseTag::loss_fusion:
      return loss_fusion(updates, context.defense_set, kind.n_exclude);
  }
  throw std::invalid_argument("aggregate: unknown defense tag");
}

}  // namespace flpoison
