#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbo/chem.hpp"
#include "rbo/data.hpp"
#include "rbo/gp.hpp"
#include "rbo/neural.hpp"
#include "rbo/pred_dist.hpp"
#include "rbo/random.hpp"

namespace rbo::surrogate {

enum class Kind { kMlp, kBnn, kGp };
enum class Mode { kRegression, kRanking };

std::string to_string(Kind kind);
std::string to_string(Mode mode);
Kind kind_from_string(const std::string& s);
Mode mode_from_string(const std::string& s);

struct SurrogateConfig {
  Kind kind = Kind::kMlp;
  Mode mode = Mode::kRegression;
  std::vector<std::size_t> hidden = {100, 100};
  neural::TrainConfig train;  // `loss` is overridden by `mode`
  std::size_t mc_samples = 50;  // BNN inference draws
  double init_sigma = 0.05;
  gp::GpFitConfig gp;
  bool gp_include_noise = false;

  // Rejects gp x ranking and invalid backend settings.
  void validate() const;
  nlohmann::json to_json() const;
  static SurrogateConfig from_json(const nlohmann::json& j);
};

// A fitted model. Predictions are in the internal convention: larger is
// better and, in regression mode, in units of the measured-set scaling.
class Surrogate {
 public:
  virtual ~Surrogate() = default;

  virtual PredDist predict(std::span<const chem::Fingerprint> queries, Rng& rng) const = 0;
  // Candidate-id interface used by the campaign loop; defaults to gathering features.
  virtual PredDist predict_ids(const data::Dataset& dataset, std::span<const std::size_t> ids, Rng& rng) const;
  virtual nlohmann::json diagnostics() const = 0;
  // Raw bytes of the fitted parameters, for reproducibility checks.
  virtual std::vector<std::uint8_t> parameter_blob() const = 0;
  // Whether predictions are unitless ranking scores.
  virtual bool ranking() const = 0;

  const data::ScalingParams& scaling() const noexcept { return scaling_; }

 protected:
  data::ScalingParams scaling_;
};

// Negates for minimisation, robust-scales with measured-set statistics, and
// trains the configured backend from scratch.
std::unique_ptr<Surrogate> fit_surrogate(const SurrogateConfig& config,
                                         std::span<const chem::Fingerprint> features,
                                         std::span<const double> raw_targets, data::Direction direction,
                                         Rng& rng);

PredDist predict_surrogate(const Surrogate& surrogate, std::span<const chem::Fingerprint> queries, Rng& rng);

struct Evaluation {
  double kendall_tau = 0.0;
  std::optional<double> r_squared;  // unset when the scaled test targets have no variance
};

// Tau between predicted means and direction-adjusted raw targets; R^2 between
// predicted means and the same targets under the surrogate's scaling.
Evaluation evaluate_predictions(const Surrogate& surrogate, std::span<const double> predicted_mean,
                                std::span<const double> raw_targets, data::Direction direction);
Evaluation evaluate_surrogate(const Surrogate& surrogate, std::span<const chem::Fingerprint> test_features,
                              std::span<const double> raw_targets, data::Direction direction, Rng& rng);

}  // namespace rbo::surrogate
