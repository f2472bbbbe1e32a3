#include "rbo/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rbo/error.hpp"
#include "rbo/stats.hpp"

namespace rbo::bayesopt {

using nlohmann::json;

std::string to_string(Acquisition a) {
  switch (a) {
    case Acquisition::kUcb: return "ucb";
    case Acquisition::kEi: return "ei";
    case Acquisition::kGreedy: return "greedy";
  }
  return "unknown";
}

Acquisition acquisition_from_string(const std::string& s) {
  if (s == "ucb") return Acquisition::kUcb;
  if (s == "ei") return Acquisition::kEi;
  if (s == "greedy") return Acquisition::kGreedy;
  throw ConfigError("unknown acquisition '" + s + "' (expected ucb, ei or greedy)");
}

double ucb(double mean, double std, double beta) { return mean + beta * std; }

double ei(double mean, double std, double best) {
  const double gap = mean - best;
  if (!(std > 0.0)) return std::max(gap, 0.0);
  const double z = gap / std;
  return std::max(0.0, gap * stats::normal_cdf(z) + std * stats::normal_pdf(z));
}

double greedy(double mean) { return mean; }

std::vector<std::size_t> select_batch(std::span<const double> scores, std::size_t q) {
  if (scores.empty()) throw DataError("select_batch: no scores");
  if (q == 0) throw ConfigError("select_batch: batch size must be at least 1");
  for (double s : scores) {
    if (std::isnan(s)) throw NumericalError("select_batch: NaN acquisition score");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = std::min(q, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(take);
  return idx;
}

void CampaignConfig::validate() const {
  surrogate.validate();
  if (n_init < 2) throw ConfigError("n_init must be at least 2");
  if (budget == 0) throw ConfigError("budget must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (budget % batch_size != 0) {
    throw ConfigError("budget " + std::to_string(budget) + " is not divisible by batch_size " +
                      std::to_string(batch_size));
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (top_k == 0) throw ConfigError("top_k must be positive");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be finite and non-negative");
}

void CampaignConfig::validate_for(std::size_t dataset_size) const {
  validate();
  const auto n_test =
      static_cast<std::size_t>(std::llround(static_cast<double>(dataset_size) * test_fraction));
  if (n_test < 1 || n_test >= dataset_size) {
    throw ConfigError("test_fraction leaves no test or no pool candidates for a dataset of size " +
                      std::to_string(dataset_size));
  }
  const std::size_t pool = dataset_size - n_test;
  if (n_init + budget > pool) {
    throw ConfigError("pool of " + std::to_string(pool) + " candidates is exhausted before n_init + budget = " +
                      std::to_string(n_init + budget));
  }
  if (top_k > pool) {
    throw ConfigError("top_k " + std::to_string(top_k) + " exceeds the pool size " + std::to_string(pool));
  }
}

json CampaignConfig::to_json() const {
  return {{"surrogate", surrogate.to_json()},
          {"acquisition", to_string(acquisition)},
          {"beta", beta},
          {"n_init", n_init},
          {"budget", budget},
          {"batch_size", batch_size},
          {"test_fraction", test_fraction},
          {"top_k", top_k},
          {"seed", seed}};
}

CampaignConfig CampaignConfig::from_json(const json& j) {
  try {
    CampaignConfig c;
    c.surrogate = surrogate::SurrogateConfig::from_json(j.at("surrogate"));
    c.acquisition = acquisition_from_string(j.at("acquisition").get<std::string>());
    c.beta = j.value("beta", c.beta);
    c.n_init = j.value("n_init", c.n_init);
    c.budget = j.value("budget", c.budget);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.top_k = j.value("top_k", c.top_k);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed campaign config: ") + e.what());
  }
}

SurrogateFactory default_factory(const surrogate::SurrogateConfig& config) {
  return [config](const data::Dataset& dataset, std::span<const std::size_t> measured, Rng& rng) {
    const auto features = dataset.features(measured);
    const auto raw = dataset.raw_targets(measured);
    return surrogate::fit_surrogate(config, features, raw, dataset.direction(), rng);
  };
}

std::vector<std::size_t> rank_pool(const data::Dataset& dataset, std::span<const std::size_t> pool) {
  std::vector<std::size_t> ranked(pool.begin(), pool.end());
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    const double ya = dataset.optimization_target(a), yb = dataset.optimization_target(b);
    return ya > yb || (ya == yb && a < b);
  });
  return ranked;
}

CampaignTrace run_campaign(const data::Dataset& dataset, const CampaignConfig& config, Rng& rng,
                           const SurrogateFactory& factory) {
  config.validate_for(dataset.size());

  CampaignTrace trace;
  trace.config = config.to_json();
  trace.seed = config.seed;
  trace.dataset = dataset.name();

  const data::Split split = data::split(dataset.size(), config.test_fraction, rng());
  const auto ranked = rank_pool(dataset, split.pool);
  std::vector<bool> is_top(dataset.size(), false);
  for (std::size_t k = 0; k < config.top_k; ++k) is_top[ranked[k]] = true;

  std::vector<std::size_t> shuffled = split.pool;
  shuffle(shuffled, rng);
  std::vector<std::size_t> measured;
  std::vector<bool> is_measured(dataset.size(), false);
  std::size_t hits = 0;
  auto reveal = [&](std::size_t id) {
    is_measured[id] = true;
    measured.push_back(id);
    if (is_top[id]) ++hits;
    trace.evaluations.push_back({measured.size(), id, dataset[id].raw_target,
                                 static_cast<double>(hits) / static_cast<double>(config.top_k)});
  };
  for (std::size_t k = 0; k < config.n_init; ++k) reveal(shuffled[k]);

  const auto test_raw = dataset.raw_targets(split.test);
  const std::size_t rounds = config.budget / config.batch_size;
  std::size_t round = 0;
  try {
    for (round = 1; round <= rounds; ++round) {
      const auto model = factory(dataset, measured, rng);

      std::vector<std::size_t> candidates;
      for (std::size_t id : split.pool) {
        if (!is_measured[id]) candidates.push_back(id);
      }
      // One prediction pass over test, candidates and (for ranking EI) measured
      // points, so every query shares the same posterior samples.
      const bool ranking_ei = config.acquisition == Acquisition::kEi && model->ranking();
      std::vector<std::size_t> queries = split.test;
      queries.insert(queries.end(), candidates.begin(), candidates.end());
      if (ranking_ei) queries.insert(queries.end(), measured.begin(), measured.end());
      const PredDist all = model->predict_ids(dataset, queries, rng);
      const auto part = [&](std::size_t lo, std::size_t len) {
        return PredDist{{all.mean.begin() + static_cast<std::ptrdiff_t>(lo),
                         all.mean.begin() + static_cast<std::ptrdiff_t>(lo + len)},
                        {all.std.begin() + static_cast<std::ptrdiff_t>(lo),
                         all.std.begin() + static_cast<std::ptrdiff_t>(lo + len)}};
      };
      const std::size_t n_test = split.test.size();
      const PredDist test_pred = part(0, n_test);
      const PredDist pred = part(n_test, candidates.size());
      const auto eval = surrogate::evaluate_predictions(*model, test_pred.mean, test_raw, dataset.direction());

      double best = -std::numeric_limits<double>::infinity();
      if (config.acquisition == Acquisition::kEi) {
        if (ranking_ei) {
          const PredDist measured_pred = part(n_test + candidates.size(), measured.size());
          best = *std::max_element(measured_pred.mean.begin(), measured_pred.mean.end());
        } else {
          for (std::size_t id : measured) {
            best = std::max(best, model->scaling().apply(dataset.optimization_target(id)));
          }
        }
      }

      std::vector<double> scores(candidates.size());
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        switch (config.acquisition) {
          case Acquisition::kUcb: scores[c] = ucb(pred.mean[c], pred.std[c], config.beta); break;
          case Acquisition::kEi: scores[c] = ei(pred.mean[c], pred.std[c], best); break;
          case Acquisition::kGreedy: scores[c] = greedy(pred.mean[c]); break;
        }
        if (!std::isfinite(scores[c])) {
          throw NumericalError("non-finite acquisition score for candidate " + std::to_string(candidates[c]));
        }
      }

      RoundRecord record;
      record.round = round;
      record.test_tau = eval.kendall_tau;
      record.test_r2 = eval.r_squared;
      record.diagnostics = model->diagnostics();
      if (config.acquisition == Acquisition::kEi) record.diagnostics["ei_best"] = best;
      trace.rounds.push_back(std::move(record));

      for (std::size_t c : select_batch(scores, config.batch_size)) reveal(candidates[c]);
    }
  } catch (const Error& e) {
    trace.status = "failed";
    trace.error = "round " + std::to_string(round) + ": " + e.what();
  }
  return trace;
}

CampaignTrace run_campaign(const data::Dataset& dataset, const CampaignConfig& config, Rng& rng) {
  return run_campaign(dataset, config, rng, default_factory(config.surrogate));
}

CampaignTrace run_campaign(const data::Dataset& dataset, const CampaignConfig& config) {
  Rng rng = make_rng(config.seed);
  return run_campaign(dataset, config, rng);
}

}  // namespace rbo::bayesopt
