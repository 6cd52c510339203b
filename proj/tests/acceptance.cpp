// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.
// The experiment-level criteria run at the default desk-scale configuration.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flpoison/attacks.hpp"
#include "flpoison/config.hpp"
#include "flpoison/defenses.hpp"
#include "flpoison/grid.hpp"
#include "flpoison/nn.hpp"
#include "flpoison/report.hpp"

using namespace flpoison;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

ModelParams random_params(const LayerSizes& sizes, Rng& rng, double scale = 0.5) {
  ModelParams p(sizes);
  for (double& v : p.values()) v = uniform(rng, -scale, scale);
  return p;
}

std::vector<Sample> random_batch(std::size_t n, std::size_t width, Rng& rng) {
  std::vector<Sample> out(n);
  for (Sample& s : out) {
    s.image.resize(width);
    for (float& v : s.image) v = static_cast<float>(uniform01(rng));
    s.target.resize(kOutputWidth);
    for (double& t : s.target) t = uniform(rng, -1.0, 1.0);
  }
  return out;
}

template <typename Objective>
double fd_error(const ModelParams& params, const std::vector<double>& grad, Objective objective) {
  const double h = 1e-5;
  ModelParams probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.parameter_count(); ++i) {
    const double saved = probe.values()[i];
    probe.values()[i] = saved + h;
    const double up = objective(probe);
    probe.values()[i] = saved - h;
    const double down = objective(probe);
    probe.values()[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(fd), std::abs(grad[i]));
    worst = std::max(worst, scale < 1e-8 ? std::abs(fd - grad[i]) : std::abs(fd - grad[i]) / scale);
  }
  return worst;
}

Check gradient_correctness() {
  Rng rng = make_rng(101);
  double worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 20; ++trial) {
    LayerSizes sizes{2 + uniform_index(rng, 6)};
    const std::size_t hidden = 1 + uniform_index(rng, 2);
    for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(3 + uniform_index(rng, 6));
    sizes.push_back(kOutputWidth);
    const ModelParams params = random_params(sizes, rng);
    const auto batch = random_batch(1 + uniform_index(rng, 4), sizes.front(), rng);
    const auto grad = backward(params, batch);
    worst = std::max(worst, fd_error(params, grad, [&](const ModelParams& p) {
                       double sum = 0.0;
                       for (const Sample& s : batch) sum += sample_loss(p, s);
                       return sum / static_cast<double>(batch.size());
                     }));
    ++instances;
  }
  for (double kappa : {1e-9, 0.1, 0.5, 1.0, 3.0}) {
    const LayerSizes sizes{4, 5, kOutputWidth};
    const ModelParams b = random_params(sizes, rng);
    const ModelParams h = random_params(sizes, rng);
    const auto data = random_batch(3, 4, rng);
    std::vector<const Sample*> batch;
    for (const Sample& s : data) batch.push_back(&s);
    const auto grad = flstealth_gradient(b, h, batch, kappa);
    worst = std::max(worst, fd_error(b, grad, [&](const ModelParams& p) {
                       return flstealth_objective(p, h, batch, kappa);
                     }));
    ++instances;
  }
  return {worst < 1e-4, std::to_string(instances) + " instances, worst relative error " + fmt(worst)};
}

Check msa_preservation() {
  const FederationConfig defaults;
  const ModelParams model = init_model(defaults.layer_sizes(), 7);
  Rng rng = make_rng(202);
  const auto inputs = random_batch(100, model.in_width(0), rng);
  std::vector<std::vector<double>> reference;
  for (const Sample& s : inputs) reference.push_back(forward(model, s.image));
  double worst = 0.0;
  int unchanged = 0;
  for (std::uint64_t shuffle = 0; shuffle < 20; ++shuffle) {
    const ModelParams moved = msa_transform(model, MsaConfig{}, 1000 + shuffle);
    if (moved.flatten() == model.flatten()) ++unchanged;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto out = forward(moved, inputs[i].image);
      for (std::size_t k = 0; k < kOutputWidth; ++k) worst = std::max(worst, std::abs(out[k] - reference[i][k]));
    }
  }
  return {worst < 1e-9 && unchanged == 0,
          "max output change " + fmt(worst) + ", unchanged parameter vectors " + std::to_string(unchanged)};
}

ClientUpdate scalar_update(int id, double value) {
  ModelParams p(LayerSizes{1, kOutputWidth});
  p.values()[0] = value;
  return {id, p};
}

Check aggregation_oracles() {
  Rng rng = make_rng(303);
  int krum_cases = 0;
  int krum_mismatch = 0;
  for (int n = 3; n <= 7; ++n) {
    for (int f = 0; f + 3 <= n; ++f) {
      for (int m = 1; m <= n; ++m) {
        for (int rep = 0; rep < 40; ++rep) {
          std::vector<ClientUpdate> ups;
          std::vector<double> values;
          for (int i = 0; i < n; ++i) {
            values.push_back(std::round(uniform(rng, -4.0, 4.0)));
            ups.push_back(scalar_update(i, values.back()));
          }
          // Brute force: every (n-f-2)-subset of the others, keep the smallest sum.
          std::vector<double> score(static_cast<std::size_t>(n));
          const int k = n - f - 2;
          for (int i = 0; i < n; ++i) {
            double best = INFINITY;
            for (unsigned mask = 0; mask < (1U << n); ++mask) {
              if (((mask >> i) & 1U) != 0 || __builtin_popcount(mask) != k) continue;
              double s = 0.0;
              for (int j = 0; j < n; ++j) {
                if (((mask >> j) & 1U) != 0) s += (values[i] - values[j]) * (values[i] - values[j]);
              }
              best = std::min(best, s);
            }
            score[static_cast<std::size_t>(i)] = best;
          }
          std::vector<int> order(static_cast<std::size_t>(n));
          for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
          std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] < score[b]; });
          std::vector<int> excluded(order.begin() + m, order.end());
          std::sort(excluded.begin(), excluded.end());
          double sum = 0.0;
          for (int r = 0; r < m; ++r) sum += values[order[r]];

          const auto out = m == 1 ? krum(ups, f) : multi_krum(ups, f, m);
          ++krum_cases;
          if (out.excluded_ids != excluded || std::abs(out.global.values()[0] - sum / m) > 1e-12) ++krum_mismatch;
        }
      }
    }
  }

  std::vector<ClientUpdate> tm;
  for (int v = 1; v <= 10; ++v) tm.push_back(scalar_update(v, v));
  const double trimmed = trimmed_mean(tm, 2).global.values()[0];

  int fusion_mismatch = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const LayerSizes sizes{6, 4, kOutputWidth};
    const std::size_t n = 4 + uniform_index(rng, 6);
    std::vector<ClientUpdate> ups;
    for (std::size_t i = 0; i < n; ++i) ups.push_back({static_cast<int>(i), random_params(sizes, rng, i % 3 == 0 ? 3.0 : 0.3)});
    const auto defense = random_batch(8, 6, rng);
    const int n_exclude = static_cast<int>(uniform_index(rng, n));
    const double fused = loss_of(loss_fusion(ups, defense, n_exclude).global, defense);
    const double a = loss_of(lfr(ups, defense, n_exclude).global, defense);
    const double b = loss_of(loss_defense(ups, defense, n_exclude).global, defense);
    if (fused != std::min(a, b)) ++fusion_mismatch;
  }
  return {krum_mismatch == 0 && trimmed == 5.5 && fusion_mismatch == 0,
          std::to_string(krum_cases) + " Krum/Multi-Krum cases (" + std::to_string(krum_mismatch) +
              " mismatches), trimmed mean " + fmt(trimmed) + ", LossFusion mismatches " +
              std::to_string(fusion_mismatch) + "/50"};
}

Check determinism(const fs::path& scratch) {
  const FederationConfig config;
  for (const char* name : {"a", "b"}) emit_reports(run_experiment(config), scratch / "determinism" / name);
  std::vector<std::string> differing;
  for (const char* file : {"report.json", "rounds.jsonl", "trajectory.csv"}) {
    if (read_text_file(scratch / "determinism" / "a" / file) != read_text_file(scratch / "determinism" / "b" / file)) {
      differing.push_back(file);
    }
  }
  std::string detail =
      differing.empty() ? "two runs, report.json, rounds.jsonl and trajectory.csv identical" : "two runs, differ:";
  for (const auto& f : differing) detail += " " + f;
  return {differing.empty(), detail};
}

Check baseline_convergence() {
  FederationConfig config;
  config.attack.tag = AttackTag::none;
  config.defense.tag = DefenseTag::fedavg;
  const auto report = run_experiment(config);
  if (report.rounds.empty()) return {false, "no rounds completed"};
  const double first = report.rounds.front().test_loss;
  return {report.training_score < 0.5 * first,
          "training_score " + fmt(report.training_score) + " vs round-1 test loss " + fmt(first)};
}

// Grid results shared by the experiment-level criteria. Runs go through an
// on-disk cache so a cell needed by two criteria is computed once.
class Experiments {
 public:
  explicit Experiments(fs::path cache) { options_.cache_dir = std::move(cache); }

  const GridCell& cell(AttackTag a, DefenseTag d) {
    const auto key = std::make_pair(a, d);
    auto it = cells_.find(key);
    if (it == cells_.end()) {
      const auto run = run_grid({a}, {d}, FederationConfig{}, seeds_, options_);
      it = cells_.emplace(key, run.result.cells.front()).first;
    }
    if (it->second.failed()) throw std::runtime_error(to_string(a) + "/" + to_string(d) + ": " + it->second.errors.front());
    return it->second;
  }

  double gap(AttackTag a, DefenseTag d) {
    const GridCell& c = cell(a, d);
    return c.backdoor_mean - c.mean;
  }

 private:
  GridOptions options_;
  std::vector<std::uint64_t> seeds_ = {1, 2, 3};
  std::map<std::pair<AttackTag, DefenseTag>, GridCell> cells_;
};

Check untargeted_ordering(Experiments& ex) {
  const double none_avg = ex.cell(AttackTag::none, DefenseTag::fedavg).mean;
  const double ga_avg = ex.cell(AttackTag::gradient_ascent, DefenseTag::fedavg).mean;
  const double none_ld = ex.cell(AttackTag::none, DefenseTag::loss_defense).mean;
  const double ga_ld = ex.cell(AttackTag::gradient_ascent, DefenseTag::loss_defense).mean;
  const bool amplified = ga_avg >= 3.0 * none_avg;
  const bool contained = ga_ld <= 1.5 * none_ld;
  return {amplified && contained, "GA/fedavg " + fmt(ga_avg) + " vs 3 x " + fmt(none_avg) + " (" +
                                      (amplified ? "ok" : "not reached") + "); GA/loss_defense " + fmt(ga_ld) +
                                      " vs 1.5 x " + fmt(none_ld) + " (" + (contained ? "ok" : "exceeded") + ")"};
}

Check flstealth_stealth() {
  const FederationConfig defaults;
  int wins = 0;
  std::string detail;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const ModelParams start = init_model(defaults.layer_sizes(), 50 + trial);
    const auto data = generate_dataset(static_cast<std::size_t>(defaults.per_client), 60 + trial, defaults.scene);
    const std::uint64_t seed = 70 + trial;
    const ModelParams honest = train_honest(start, data, defaults.hyper, seed);
    const ModelParams stealth = flstealth_train(start, data, defaults.hyper, defaults.attack.flstealth, seed);
    const ModelParams ascent = gradient_ascent_train(start, data, defaults.hyper, seed);
    const double ds = params_mse(stealth, honest);
    const double da = params_mse(ascent, honest);
    if (ds < da) ++wins;
    detail += (trial == 0 ? "" : ", ") + fmt(ds) + "<" + fmt(da);
  }
  return {wins >= 4, std::to_string(wins) + "/5 trials closer (" + detail + ")"};
}

Check fusion_dominance(Experiments& ex) {
  const double baseline = ex.cell(AttackTag::none, DefenseTag::fedavg).mean;
  bool ok = true;
  std::string detail;
  for (AttackTag a : {AttackTag::label_flip, AttackTag::gradient_ascent, AttackTag::msa, AttackTag::flstealth}) {
    const double score = ex.cell(a, DefenseTag::loss_fusion).mean;
    ok = ok && score <= 1.3 * baseline;
    detail += to_string(a) + " " + fmt(score) + ", ";
  }
  return {ok, detail + "limit 1.3 x " + fmt(baseline)};
}

Check ota_effectiveness(Experiments& ex) {
  const GridCell& ota = ex.cell(AttackTag::ota, DefenseTag::fedavg);
  const GridCell& none = ex.cell(AttackTag::none, DefenseTag::fedavg);
  const double gap = ota.backdoor_mean - ota.mean;
  const double clean_gap = none.backdoor_mean - none.mean;
  const bool effective = gap >= 0.15 * ota.mean;
  const bool quiet = ota.mean <= 1.3 * none.mean;
  const bool clean = clean_gap < 0.05 * none.mean;
  return {effective && quiet && clean,
          "OTA gap " + fmt(gap) + " vs required " + fmt(0.15 * ota.mean) + (effective ? " (ok)" : " (not reached)") +
              "; OTA training_score " + fmt(ota.mean) + " vs 1.3 x " + fmt(none.mean) + (quiet ? " (ok)" : " (exceeded)") +
              "; no-attack gap " + fmt(clean_gap) + (clean ? " (ok)" : " (too large)")};
}

Check ota_resilience(Experiments& ex) {
  const double gap = ex.gap(AttackTag::ota, DefenseTag::loss_fusion);
  return {gap > 0.0, "mean backdoor gap under loss_fusion " + fmt(gap)};
}

Check defense_invariants() {
  Rng rng = make_rng(1111);
  int instances = 0;
  std::vector<std::string> broken;
  for (DefenseTag tag : all_defense_tags()) {
    bool ok = true;
    for (int rep = 0; rep < 5; ++rep) {
      const LayerSizes sizes{3 + uniform_index(rng, 4), 2 + uniform_index(rng, 4), kOutputWidth};
      const std::size_t n = 5 + uniform_index(rng, 5);
      DefenseKind kind;
      kind.tag = tag;
      kind.f = static_cast<int>(uniform_index(rng, n - 2));
      kind.m = 1 + static_cast<int>(uniform_index(rng, n));
      kind.beta = static_cast<int>(uniform_index(rng, (n + 1) / 2));
      kind.n_exclude = static_cast<int>(uniform_index(rng, n));
      const ModelParams before = random_params(sizes, rng, 0.3);
      const auto defense = random_batch(6, sizes.front(), rng);
      DefenseContext context;
      context.global_before = &before;
      context.defense_set = defense;
      context.seed = 9;

      // Idempotence: n copies of one update.
      const ModelParams model = random_params(sizes, rng, 0.3);
      std::vector<ClientUpdate> copies;
      for (std::size_t i = 0; i < n; ++i) copies.push_back({static_cast<int>(i * 2 + 1), model});
      const auto same = aggregate(kind, copies, context);
      if (tag == DefenseTag::fltrust) {
        // Deltas are rescaled to the server norm; copies must act like one submission.
        std::vector<ClientUpdate> single = {copies.front()};
        const auto one = aggregate(kind, single, context);
        for (std::size_t k = 0; k < model.parameter_count(); ++k) {
          ok = ok && std::abs(same.global.values()[k] - one.global.values()[k]) <= 1e-12;
        }
      } else {
        ok = ok && same.global == model;
      }

      // Permutation invariance: shuffled submission order gives identical output.
      std::vector<ClientUpdate> ups;
      for (std::size_t i = 0; i < n; ++i) {
        ups.push_back({static_cast<int>(i * 3), random_params(sizes, rng, uniform_index(rng, 4) == 0 ? 4.0 : 0.3)});
      }
      const auto reference = aggregate(kind, ups, context);
      for (int s = 0; s < 3; ++s) {
        shuffle(ups, rng);
        const auto out = aggregate(kind, ups, context);
        ok = ok && out.global == reference.global && out.excluded_ids == reference.excluded_ids &&
             out.per_client_scores == reference.per_client_scores;
      }
      ++instances;
    }
    if (!ok) broken.push_back(to_string(tag));
  }
  std::string detail = std::to_string(instances) + " randomized instances over 9 defenses";
  for (const auto& b : broken) detail += "; failed: " + b;
  return {broken.empty(), detail};
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / "flpoison_acceptance";
  fs::remove_all(scratch);
  Experiments experiments(scratch / "cache");

  struct Criterion {
    int number;
    const char* name;
    double budget_seconds;
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", 10, gradient_correctness},
      {2, "MSA function preservation", 5, msa_preservation},
      {3, "aggregation oracles", 10, aggregation_oracles},
      {4, "determinism", 0, [&] { return determinism(scratch); }},
      {5, "baseline convergence", 120, baseline_convergence},
      {6, "untargeted-attack ordering", 900, [&] { return untargeted_ordering(experiments); }},
      {7, "FLStealth stealth", 300, flstealth_stealth},
      {8, "LossFusion dominance", 2700, [&] { return fusion_dominance(experiments); }},
      {9, "OTA effectiveness", 600, [&] { return ota_effectiveness(experiments); }},
      {10, "OTA resilience to defenses", 900, [&] { return ota_resilience(experiments); }},
      {11, "defense idempotence and permutation invariance", 10, defense_invariants},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Check result;
    try {
      result = c.run();
    } catch (const std::exception& e) {
      result = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // Criterion 4 is bounded by construction: it runs exactly two experiments.
    const bool in_budget = c.budget_seconds <= 0.0 || seconds < c.budget_seconds;
    const bool pass = result.pass && in_budget;
    if (!pass) ++failed;
    std::ostringstream line;
    line << (pass ? "[PASS]" : "[FAIL]") << " criterion " << c.number << ": " << c.name << " - " << result.detail
         << " (" << fmt(seconds) << " s" << (in_budget ? "" : ", over budget") << ")";
    std::cout << line.str() << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  fs::remove_all(scratch);
  return failed == 0 ? 0 : 1;
}
