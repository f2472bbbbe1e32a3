#include "rbo/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rbo/analytics.hpp"
#include "rbo/error.hpp"

namespace rbo::surrogate {

using nlohmann::json;

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::kMlp: return "mlp";
    case Kind::kBnn: return "bnn";
    case Kind::kGp: return "gp";
  }
  return "unknown";
}

std::string to_string(Mode mode) { return mode == Mode::kRegression ? "regression" : "ranking"; }

Kind kind_from_string(const std::string& s) {
  if (s == "mlp") return Kind::kMlp;
  if (s == "bnn") return Kind::kBnn;
  if (s == "gp") return Kind::kGp;
  throw ConfigError("unknown surrogate kind '" + s + "' (expected mlp, bnn or gp)");
}

Mode mode_from_string(const std::string& s) {
  if (s == "regression") return Mode::kRegression;
  if (s == "ranking") return Mode::kRanking;
  throw ConfigError("unknown surrogate mode '" + s + "' (expected regression or ranking)");
}

void SurrogateConfig::validate() const {
  if (kind == Kind::kGp) {
    if (mode == Mode::kRanking) throw ConfigError("gp surrogates support regression mode only");
    gp.validate();
    return;
  }
  if (hidden.empty()) throw ConfigError("neural surrogates need at least one hidden layer");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  }
  if (mc_samples == 0) throw ConfigError("mc_samples must be at least 1");
  if (!(init_sigma > 0.0)) throw ConfigError("init_sigma must be positive");
  train.validate();
}

json SurrogateConfig::to_json() const {
  json j = {{"kind", to_string(kind)}, {"mode", to_string(mode)}};
  if (kind == Kind::kGp) {
    j["gp_learning_rate"] = gp.learning_rate;
    j["gp_steps"] = gp.steps;
    j["gp_init_log_outputscale"] = gp.init_log_outputscale;
    j["gp_init_log_noise"] = gp.init_log_noise;
    j["gp_include_noise"] = gp_include_noise;
    return j;
  }
  j["hidden"] = hidden;
  j["learning_rate"] = train.learning_rate;
  j["max_epochs"] = train.max_epochs;
  j["patience"] = train.patience;
  j["validation_fraction"] = train.validation_fraction;
  j["margin"] = train.margin;
  j["batch_size"] = train.batch_size;
  j["pair_multiplier"] = train.pair_multiplier;
  j["resample_pairs_each_epoch"] = train.resample_pairs_each_epoch;
  if (kind == Kind::kBnn) {
    j["kl_weight"] = train.kl_weight ? json(*train.kl_weight) : json(nullptr);
    j["mc_samples_train"] = train.mc_samples_train;
    j["mc_samples"] = mc_samples;
    j["init_sigma"] = init_sigma;
  }
  return j;
}

SurrogateConfig SurrogateConfig::from_json(const json& j) {
  try {
    SurrogateConfig c;
    c.kind = kind_from_string(j.at("kind").get<std::string>());
    c.mode = mode_from_string(j.at("mode").get<std::string>());
    c.gp.learning_rate = j.value("gp_learning_rate", c.gp.learning_rate);
    c.gp.steps = j.value("gp_steps", c.gp.steps);
    c.gp.init_log_outputscale = j.value("gp_init_log_outputscale", c.gp.init_log_outputscale);
    c.gp.init_log_noise = j.value("gp_init_log_noise", c.gp.init_log_noise);
    c.gp_include_noise = j.value("gp_include_noise", c.gp_include_noise);
    c.hidden = j.value("hidden", c.hidden);
    c.train.learning_rate = j.value("learning_rate", c.train.learning_rate);
    c.train.max_epochs = j.value("max_epochs", c.train.max_epochs);
    c.train.patience = j.value("patience", c.train.patience);
    c.train.validation_fraction = j.value("validation_fraction", c.train.validation_fraction);
    c.train.margin = j.value("margin", c.train.margin);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.pair_multiplier = j.value("pair_multiplier", c.train.pair_multiplier);
    c.train.resample_pairs_each_epoch = j.value("resample_pairs_each_epoch", c.train.resample_pairs_each_epoch);
    if (j.contains("kl_weight") && !j.at("kl_weight").is_null()) c.train.kl_weight = j.at("kl_weight").get<double>();
    c.train.mc_samples_train = j.value("mc_samples_train", c.train.mc_samples_train);
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.init_sigma = j.value("init_sigma", c.init_sigma);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed surrogate config: ") + e.what());
  }
}

PredDist Surrogate::predict_ids(const data::Dataset& dataset, std::span<const std::size_t> ids, Rng& rng) const {
  const auto features = dataset.features(ids);
  return predict(features, rng);
}

namespace {

json scaling_json(const data::ScalingParams& p) {
  return {{"median", p.median}, {"iqr", p.iqr}, {"fallback_scale_used", p.fallback_scale_used}};
}

class NeuralSurrogate final : public Surrogate {
 public:
  NeuralSurrogate(const SurrogateConfig& config, data::ScalingParams scaling, neural::TrainResult result)
      : config_(config), network_(std::move(result.network)), report_(std::move(result.report)) {
    scaling_ = scaling;
  }

  PredDist predict(std::span<const chem::Fingerprint> queries, Rng& rng) const override {
    const auto rows = neural::from_fingerprints(queries);
    return neural::predict(network_, rows, config_.mc_samples, rng);
  }

  json diagnostics() const override {
    json j = {{"epochs_run", report_.epochs_run},
              {"best_epoch", report_.best_epoch},
              {"stop_reason", neural::to_string(report_.stop_reason)},
              {"train_size", report_.train_size},
              {"validation_size", report_.validation_size},
              {"final_train_loss", report_.train_loss.empty() ? 0.0 : report_.train_loss.back()},
              {"scaling", scaling_json(scaling_)}};
    if (report_.validation_size > 0) {
      j["initial_validation_loss"] = report_.initial_validation_loss;
      j["best_validation_loss"] = report_.best_validation_loss;
    }
    return j;
  }

  std::vector<std::uint8_t> parameter_blob() const override { return network_.serialize(); }
  bool ranking() const override { return config_.mode == Mode::kRanking; }

 private:
  SurrogateConfig config_;
  neural::Network network_;
  neural::TrainReport report_;
};

class GpSurrogate final : public Surrogate {
 public:
  GpSurrogate(const SurrogateConfig& config, data::ScalingParams scaling, gp::GPModel model, gp::FitTrace trace)
      : config_(config), model_(std::move(model)), trace_(std::move(trace)) {
    scaling_ = scaling;
  }

  PredDist predict(std::span<const chem::Fingerprint> queries, Rng&) const override {
    return model_.posterior(queries, config_.gp_include_noise);
  }

  json diagnostics() const override {
    return {{"log_outputscale", model_.log_outputscale()},
            {"log_noise", model_.log_noise()},
            {"jitter", model_.jitter()},
            {"negative_mll", model_.negative_mll()},
            {"initial_negative_mll", trace_.loss.front()},
            {"best_step", trace_.best_step},
            {"train_size", model_.size()},
            {"scaling", scaling_json(scaling_)}};
  }

  std::vector<std::uint8_t> parameter_blob() const override {
    std::vector<double> values = {model_.log_outputscale(), model_.log_noise(), model_.jitter()};
    values.insert(values.end(), model_.alpha().begin(), model_.alpha().end());
    std::vector<std::uint8_t> blob(values.size() * sizeof(double));
    std::memcpy(blob.data(), values.data(), blob.size());
    return blob;
  }
  bool ranking() const override { return false; }

 private:
  SurrogateConfig config_;
  gp::GPModel model_;
  gp::FitTrace trace_;
};

}  // namespace

std::unique_ptr<Surrogate> fit_surrogate(const SurrogateConfig& config,
                                         std::span<const chem::Fingerprint> features,
                                         std::span<const double> raw_targets, data::Direction direction,
                                         Rng& rng) {
  config.validate();
  if (features.size() != raw_targets.size()) throw DataError("fit_surrogate: feature/target length mismatch");
  if (features.size() < 2) throw DataError("fit_surrogate: need at least two measured points");

  std::vector<double> targets;
  targets.reserve(raw_targets.size());
  for (double y : raw_targets) targets.push_back(data::to_optimization(y, direction));
  data::Scaled scaled = data::robust_scale(targets);

  if (config.kind == Kind::kGp) {
    gp::FitTrace trace;
    gp::GPModel model = gp::fit_gp(std::vector<chem::Fingerprint>(features.begin(), features.end()),
                                   std::move(scaled.values), config.gp, &trace);
    return std::make_unique<GpSurrogate>(config, scaled.params, std::move(model), std::move(trace));
  }

  neural::NetworkSpec spec;
  spec.input_dim = features.front().nbits();
  spec.hidden = config.hidden;
  spec.layer_kind = config.kind == Kind::kBnn ? neural::LayerKind::kVariational : neural::LayerKind::kDense;
  neural::Network network = neural::Network::initialized(spec, rng, config.init_sigma);
  neural::TrainConfig train = config.train;
  train.loss = config.mode == Mode::kRanking ? neural::LossKind::kRanking : neural::LossKind::kMse;
  const auto rows = neural::from_fingerprints(features);
  auto result = neural::train(std::move(network), rows, scaled.values, train, rng);
  return std::make_unique<NeuralSurrogate>(config, scaled.params, std::move(result));
}

PredDist predict_surrogate(const Surrogate& surrogate, std::span<const chem::Fingerprint> queries, Rng& rng) {
  return surrogate.predict(queries, rng);
}

Evaluation evaluate_predictions(const Surrogate& surrogate, std::span<const double> predicted_mean,
                                std::span<const double> raw_targets, data::Direction direction) {
  if (raw_targets.empty()) throw DataError("evaluate_surrogate: empty test set");
  if (predicted_mean.size() != raw_targets.size()) {
    throw DataError("evaluate_surrogate: prediction/target length mismatch");
  }
  std::vector<double> truth, scaled;
  for (double y : raw_targets) {
    truth.push_back(data::to_optimization(y, direction));
    scaled.push_back(surrogate.scaling().apply(truth.back()));
  }
  Evaluation out;
  out.kendall_tau = truth.size() < 2 ? 0.0 : analytics::kendall_tau(predicted_mean, truth);
  const bool varies = std::any_of(scaled.begin(), scaled.end(), [&](double v) { return v != scaled.front(); });
  if (varies) out.r_squared = analytics::r_squared(scaled, predicted_mean);
  return out;
}

Evaluation evaluate_surrogate(const Surrogate& surrogate, std::span<const chem::Fingerprint> test_features,
                              std::span<const double> raw_targets, data::Direction direction, Rng& rng) {
  const PredDist pred = surrogate.predict(test_features, rng);
  return evaluate_predictions(surrogate, pred.mean, raw_targets, direction);
}

}  // namespace rbo::surrogate
