#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbo/data.hpp"
#include "rbo/random.hpp"
#include "rbo/surrogate.hpp"
#include "rbo/trace.hpp"

namespace rbo::bayesopt {

enum class Acquisition { kUcb, kEi, kGreedy };

std::string to_string(Acquisition a);
Acquisition acquisition_from_string(const std::string& s);

double ucb(double mean, double std, double beta);
// Expected improvement over `best`; max(mean - best, 0) when std is 0.
double ei(double mean, double std, double best);
double greedy(double mean);

// Indices of the q largest scores, best first; ties go to the lower index.
std::vector<std::size_t> select_batch(std::span<const double> scores, std::size_t q);

struct CampaignConfig {
  surrogate::SurrogateConfig surrogate;
  Acquisition acquisition = Acquisition::kUcb;
  double beta = 0.3;
  std::size_t n_init = 10;
  std::size_t budget = 100;
  std::size_t batch_size = 5;
  double test_fraction = 0.15;
  std::size_t top_k = 100;
  std::uint64_t seed = 0;

  void validate() const;
  // Also checks that the acquisition pool of an n-candidate dataset can
  // supply n_init + budget evaluations and top_k ground-truth hits.
  void validate_for(std::size_t dataset_size) const;
  nlohmann::json to_json() const;
  static CampaignConfig from_json(const nlohmann::json& j);
};

// Builds a fitted surrogate from the measured candidate ids.
using SurrogateFactory = std::function<std::unique_ptr<surrogate::Surrogate>(
    const data::Dataset& dataset, std::span<const std::size_t> measured, Rng& rng)>;

SurrogateFactory default_factory(const surrogate::SurrogateConfig& config);

// Configuration errors throw; failures during the campaign are recorded as a
// partial trace with status "failed".
CampaignTrace run_campaign(const data::Dataset& dataset, const CampaignConfig& config, Rng& rng,
                           const SurrogateFactory& factory);
CampaignTrace run_campaign(const data::Dataset& dataset, const CampaignConfig& config, Rng& rng);
// Seeds the generator from config.seed.
CampaignTrace run_campaign(const data::Dataset& dataset, const CampaignConfig& config);

// Pool ids sorted best first (direction-adjusted, ties by id); the first
// top_k form the ground-truth set.
std::vector<std::size_t> rank_pool(const data::Dataset& dataset, std::span<const std::size_t> pool);

}  // namespace rbo::bayesopt
