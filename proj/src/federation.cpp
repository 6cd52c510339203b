#include "flpoison/federation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "flpoison/config.hpp"
#include "flpoison/kernels.hpp"
#include "flpoison/metrics.hpp"
#include "flpoison/rng.hpp"

namespace flpoison {

namespace {

void require(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

LayerSizes FederationConfig::layer_sizes() const {
  LayerSizes sizes;
  sizes.push_back(scene.image_length());
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(kOutputWidth);
  return sizes;
}

std::size_t FederationConfig::dataset_size() const {
  return static_cast<std::size_t>(rounds) * static_cast<std::size_t>(total_clients) *
             static_cast<std::size_t>(per_client) +
         static_cast<std::size_t>(test_n) + static_cast<std::size_t>(defense_n);
}

void FederationConfig::validate() const {
  require(rounds >= 1, "rounds", "must be at least 1");
  require(total_clients >= 1, "total_clients", "must be at least 1");
  require(malicious_count >= 0 && malicious_count <= total_clients, "malicious_count",
          "must lie in [0, total_clients]");
  require(sampled_per_round >= 1 && sampled_per_round <= total_clients, "sampled_per_round",
          "must lie in [1, total_clients]");
  require(per_client >= 1, "data.per_client", "must be at least 1");
  require(test_n >= 1, "data.test_n", "must be at least 1");
  require(defense_n >= 0, "data.defense_n", "must be non-negative");
  require(scene.height >= 4, "data.image_height", "must be at least 4");
  require(scene.width >= 4, "data.image_width", "must be at least 4");
  require(scene.curvature_max >= 0.0 && std::isfinite(scene.curvature_max), "data.curvature_max",
          "must be finite and non-negative");
  require(scene.noise_max >= 0.0 && scene.noise_max <= 0.1, "data.noise_max", "must lie in [0, 0.1]");
  for (std::size_t w : hidden_layers) require(w >= 1, "model.hidden_layers", "widths must be positive");

  require(hyper.epochs >= 0, "training.epochs", "must be non-negative");
  require(hyper.batch_size >= 1, "training.batch_size", "must be positive");
  require(hyper.learning_rate > 0.0, "training.learning_rate", "must be positive");
  require(hyper.adam_beta1 > 0.0 && hyper.adam_beta1 < 1.0, "training.adam_beta1", "must lie in (0,1)");
  require(hyper.adam_beta2 > 0.0 && hyper.adam_beta2 < 1.0, "training.adam_beta2", "must lie in (0,1)");
  require(hyper.adam_eps > 0.0, "training.adam_eps", "must be positive");

  require(std::isfinite(attack.label_flip_factor), "attack.label_flip_factor", "must be finite");
  require(attack.msa.shuffle_rows >= 1, "attack.msa.shuffle_rows", "must be at least 1");
  require(!attack.msa.scale_beta || *attack.msa.scale_beta > 0.0, "attack.msa.scale_beta", "must be positive");
  require(attack.flstealth.kappa >= 0.0, "attack.flstealth.kappa", "must be non-negative");
  require(attack.flstealth.byz_epochs >= 1, "attack.flstealth.byz_epochs", "must be at least 1");
  require(attack.flstealth.byz_learning_rate > 0.0, "attack.flstealth.byz_learning_rate", "must be positive");
  require(attack.ota.poison_fraction >= 0.0 && attack.ota.poison_fraction <= 1.0, "attack.ota.poison_fraction",
          "must lie in [0,1]");
  require(std::isfinite(attack.ota.turn_magnitude), "attack.ota.turn_magnitude", "must be finite");
  require(attack.ota.direction == 1 || attack.ota.direction == -1, "attack.ota.direction", "must be +1 or -1");
  const TriggerSpec& trig = attack.ota.trigger;
  require(trig.size_fraction > 0.0 && trig.size_fraction <= 1.0, "attack.ota.trigger.size_fraction",
          "must lie in (0,1]");
  require(trig.count >= 1, "attack.ota.trigger.count", "must be at least 1");
  for (float c : trig.color) require(c >= 0.0F && c <= 1.0F, "attack.ota.trigger.color", "channels must lie in [0,1]");
  require(trig.side(scene.height) <= std::min(scene.height, scene.width), "attack.ota.trigger.size_fraction",
          "square does not fit in the image");

  const int n = sampled_per_round;
  require(defense.f >= 0, "defense.f", "must be non-negative");
  require(defense.m >= 1, "defense.m", "must be positive");
  require(defense.beta >= 0, "defense.beta", "must be non-negative");
  require(defense.n_exclude >= 0, "defense.n_exclude", "must be non-negative");
  switch (defense.tag) {
    case DefenseTag::krum:
      require(n >= defense.f + 3, "defense.f", "Krum needs sampled_per_round >= f + 3");
      break;
    case DefenseTag::multi_krum:
      require(n >= defense.f + 3, "defense.f", "Multi-Krum needs sampled_per_round >= f + 3");
      require(defense.m <= n, "defense.m", "must not exceed sampled_per_round");
      break;
    case DefenseTag::trimmed_mean:
      require(n > 2 * defense.beta, "defense.beta", "Trimmed Mean needs sampled_per_round > 2*beta");
      break;
    case DefenseTag::fltrust:
      require(defense_n >= 1, "data.defense_n", "FLTrust needs a non-empty defense set");
      break;
    case DefenseTag::lfr:
    case DefenseTag::loss_defense:
    case DefenseTag::loss_fusion:
      require(defense_n >= 1, "data.defense_n", "loss-based defenses need a non-empty defense set");
      require(defense.n_exclude < n, "defense.n_exclude", "must be below sampled_per_round");
      break;
    case DefenseTag::pca_defense:
      require(defense.n_exclude < n, "defense.n_exclude", "must be below sampled_per_round");
      break;
    case DefenseTag::fedavg:
      break;
  }
  require(score_window >= 1, "score_window", "must be at least 1");
}

std::set<int> assign_malicious(const FederationConfig& config) {
  std::vector<int> ids(static_cast<std::size_t>(config.total_clients));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = make_rng(mix_seed(config.sample_seed, salt::kMalicious));
  shuffle(ids, rng);
  return {ids.begin(), ids.begin() + config.malicious_count};
}

std::vector<int> select_clients(int round, const FederationConfig& config) {
  std::vector<int> ids(static_cast<std::size_t>(config.total_clients));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = make_rng(mix_seed(config.sample_seed, {salt::kSampling, static_cast<std::uint64_t>(round)}));
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  const auto k = static_cast<std::size_t>(config.sampled_per_round);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

DatasetSplit build_split(const FederationConfig& config) {
  return split_dataset(generate_dataset(config.dataset_size(), config.data_seed, config.scene),
                       static_cast<std::size_t>(config.rounds), static_cast<std::size_t>(config.total_clients),
                       static_cast<std::size_t>(config.per_client), static_cast<std::size_t>(config.test_n),
                       static_cast<std::size_t>(config.defense_n), config.data_seed, config.scene,
                       config.attack.ota.trigger);
}

std::pair<ModelParams, RoundRecord> run_round(const ModelParams& global, int round, const FederationConfig& config,
                                              const DatasetSplit& split, std::vector<CellRead>* access_log) {
  if (round < 0 || round >= config.rounds) throw std::out_of_range("run_round: round index out of range");
  // Without an attack every participant behaves honestly, so none is reported as malicious.
  const std::set<int> malicious =
      config.attack.tag == AttackTag::none ? std::set<int>{} : assign_malicious(config);

  RoundRecord record;
  record.round = round;
  record.sampled = select_clients(round, config);
  for (int id : record.sampled) {
    if (malicious.contains(id)) record.malicious_sampled.push_back(id);
  }

  const std::size_t n = record.sampled.size();
  std::vector<ClientUpdate> updates(n);
  std::vector<double> local_loss(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  const auto nn = static_cast<std::ptrdiff_t>(n);

  // Clients are independent; each writes only its own slot.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < nn; ++i) {
    try {
      const int id = record.sampled[static_cast<std::size_t>(i)];
      const std::vector<Sample>& cell = split.cell(static_cast<std::size_t>(round), static_cast<std::size_t>(id));
      const std::uint64_t seed = mix_seed(
          config.train_seed, {salt::kClientTrain, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(id)});
      updates[i].client_id = id;
      if (malicious.contains(id)) {
        updates[i].params = train_malicious(config.attack, global, cell, config.hyper, seed, config.scene);
      } else {
        updates[i].params = train_honest(global, cell, config.hyper, seed);
        local_loss[i] = kernels::serial::mean_l1_loss(updates[i].params, cell);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (access_log != nullptr) {
    for (int id : record.sampled) access_log->push_back({round, id, id});
  }

  double honest_sum = 0.0;
  int honest_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!malicious.contains(record.sampled[i])) {
      honest_sum += local_loss[i];
      ++honest_count;
    }
  }
  record.train_loss = honest_count > 0 ? honest_sum / honest_count : std::numeric_limits<double>::quiet_NaN();

  DefenseContext context;
  context.global_before = &global;
  context.defense_set = split.defense;
  context.hyper = config.hyper;
  context.seed = mix_seed(config.train_seed, {salt::kServerTrain, static_cast<std::uint64_t>(round)});

  AggregationOutcome outcome;
  try {
    outcome = aggregate(config.defense, updates, context);
  } catch (const NonFiniteError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error("round " + std::to_string(round) + ": aggregation failed: " + e.what());
  }
  record.excluded = outcome.excluded_ids;
  record.client_scores = outcome.per_client_scores;

  if (outcome.global.all_finite()) {
    record.test_loss = loss_of(outcome.global, split.test);
    record.backdoor_test_loss =
        split.backdoor_test.empty() ? record.test_loss : loss_of(outcome.global, split.backdoor_test);
  } else {
    record.test_loss = std::numeric_limits<double>::quiet_NaN();
    record.backdoor_test_loss = std::numeric_limits<double>::quiet_NaN();
  }
  return {std::move(outcome.global), std::move(record)};
}

ExperimentReport run_experiment(const FederationConfig& config, const DatasetSplit& split) {
  config.validate();
  ExperimentReport report;
  report.config = config;
  report.config_hash = config_hash(config);

  ModelParams global = init_model(config.layer_sizes(), config.train_seed);
  for (int round = 0; round < config.rounds; ++round) {
    std::pair<ModelParams, RoundRecord> step;
    try {
      step = run_round(global, round, config, split);
    } catch (const NonFiniteError&) {
      // A client's training blew up on a finite but huge global model.
      report.diverged = true;
      report.diverged_round = round;
      break;
    }
    auto& [next, record] = step;
    if (!next.all_finite()) {
      report.diverged = true;
      report.diverged_round = round;
      break;
    }
    global = std::move(next);
    report.rounds.push_back(std::move(record));
  }

  if (report.rounds.empty()) {
    report.training_score = std::numeric_limits<double>::quiet_NaN();
    report.backdoor_score = std::numeric_limits<double>::quiet_NaN();
    report.partial_window = true;
  } else {
    report.training_score = training_score(report, config.score_window);
    report.backdoor_score = backdoor_score(report, config.score_window);
    report.partial_window = window_is_partial(report, config.score_window);
  }
  return report;
}

ExperimentReport run_experiment(const FederationConfig& config) {
  config.validate();
  return run_experiment(config, build_split(config));
}

}  // namespace flpoison
