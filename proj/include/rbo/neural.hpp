#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbo/aligned.hpp"
#include "rbo/chem.hpp"
#include "rbo/data.hpp"
#include "rbo/pred_dist.hpp"
#include "rbo/random.hpp"

namespace rbo::neural {

enum class LayerKind { kDense, kVariational };
enum class Activation { kRelu };
enum class LossKind { kMse, kRanking };

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {100, 100};
  Activation activation = Activation::kRelu;
  LayerKind layer_kind = LayerKind::kDense;
  std::size_t output_dim = 1;

  void validate() const;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Sparse input row. Fingerprints become their on-bit indices with value 1.
struct FeatureRow {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
};

FeatureRow from_fingerprint(const chem::Fingerprint& fp);
FeatureRow dense_row(std::span<const double> values);
std::vector<FeatureRow> from_fingerprints(std::span<const chem::Fingerprint> fps);

// Offsets of one layer's parameters inside the flat parameter vector. Weights
// are stored input-major ([in][out]) so a sparse input touches whole rows.
// A variational layer stores [w_mu | b_mu | w_rho | b_rho]; every rho sits
// `rho_shift` entries after its mu.
struct LayerLayout {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;
  bool variational = false;

  std::size_t weight(std::size_t i, std::size_t j) const { return offset + i * out + j; }
  std::size_t bias(std::size_t j) const { return offset + in * out + j; }
  std::size_t mu_count() const { return in * out + out; }
  std::size_t rho_shift() const { return mu_count(); }
  std::size_t param_count() const { return variational ? 2 * mu_count() : mu_count(); }
};

class Network {
 public:
  Network() = default;
  // All parameters zero (rho zero too, i.e. sigma = softplus(0)).
  explicit Network(NetworkSpec spec);

  // Uniform(+-1/sqrt(fan_in)) means; rho chosen so sigma = `init_sigma`.
  static Network initialized(NetworkSpec spec, Rng& rng, double init_sigma = 0.05);

  const NetworkSpec& spec() const noexcept { return spec_; }
  bool variational() const noexcept { return spec_.layer_kind == LayerKind::kVariational; }
  const std::vector<LayerLayout>& layers() const noexcept { return layers_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  // Flat blob: magic, format version, spec echo, parameter array.
  std::vector<std::uint8_t> serialize() const;
  static Network deserialize(std::span<const std::uint8_t> blob);
  void save(const std::filesystem::path& path) const;
  static Network load(const std::filesystem::path& path);

 private:
  NetworkSpec spec_;
  std::vector<LayerLayout> layers_;
  AlignedBuffer params_;
};

double softplus(double x) noexcept;
double sigmoid(double x) noexcept;

// Pairwise hinge: max(0, -sign(y1 - y2) * (yhat1 - yhat2) + m).
double ranking_loss(double y1, double y2, double yhat1, double yhat2, double margin);
double mse_loss(std::span<const double> y, std::span<const double> yhat);
// KL(N(mu, sigma^2) || N(0, 1)).
double kl_gaussian(double mu, double sigma);
// Sum of kl_gaussian over every variational parameter; 0 for dense networks.
double network_kl(const Network& net);

// Weight noise for one reparameterised draw: zeta[p] is the standard normal
// paired with mean parameter p (same indexing as Network::params()).
using WeightNoise = std::vector<double>;
WeightNoise sample_noise(const Network& net, Rng& rng);

// Single-row forward pass. With `sample_weights` a fresh w = mu + sigma * zeta
// is drawn for variational layers; otherwise the means are used.
double forward(const Network& net, const FeatureRow& input, bool sample_weights, Rng& rng);
// Forward pass with explicit noise (nullptr = posterior mean).
double forward_with_noise(const Network& net, const FeatureRow& input, const WeightNoise* noise);

struct Batch {
  std::span<const FeatureRow> rows;
  std::span<const double> targets;
  std::span<const std::size_t> points;  // MSE: rows in the batch
  std::span<const data::Pair> pairs;    // ranking: pairs of row indices
};

// Mean batch loss plus kl_weight * KL, and its gradient with respect to every
// parameter (resized to param_count). `noise` fixes the weight draw; nullptr
// uses the posterior means.
double loss_and_gradient(const Network& net, const Batch& batch, LossKind loss, double margin,
                         const WeightNoise* noise, double kl_weight, std::vector<double>& grad);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamOptions& options);

struct TrainConfig {
  LossKind loss = LossKind::kMse;
  double margin = 0.0;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double validation_fraction = 0.1;
  std::optional<double> kl_weight;  // default: 1 / minibatches per epoch
  std::size_t mc_samples_train = 1;
  std::size_t batch_size = 32;
  std::size_t pair_multiplier = 2;
  bool resample_pairs_each_epoch = false;
  // First-layer rows that no training or validation row activates only feel
  // the prior; their Adam updates are replayed once at the end instead of
  // every step. The result is the same up to rounding.
  bool lazy_prior_rows = true;

  void validate() const;
};

enum class StopReason { kMaxEpochs, kEarlyStopping, kNoValidation };
std::string to_string(StopReason reason);

struct TrainReport {
  std::vector<double> train_loss;       // mean minibatch data loss per epoch (KL term excluded)
  std::vector<double> validation_loss;  // empty when the set is too small to split
  double initial_validation_loss = 0.0;
  double best_validation_loss = 0.0;
  std::size_t best_epoch = 0;  // 0 = the initial parameters were never beaten
  std::size_t epochs_run = 0;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  StopReason stop_reason = StopReason::kMaxEpochs;
};

struct TrainResult {
  Network network;
  TrainReport report;
};

// Splits the rows into train/validation, minimises the configured loss with
// Adam, and returns the parameters with the lowest validation loss.
TrainResult train(Network network, std::span<const FeatureRow> rows, std::span<const double> targets,
                  const TrainConfig& config, Rng& rng);

// Validation-style loss with posterior means over a set of rows (MSE) or pairs (ranking).
double evaluate_loss(const Network& net, std::span<const FeatureRow> rows, std::span<const double> targets,
                     std::span<const std::size_t> points, std::span<const data::Pair> pairs, LossKind loss,
                     double margin);

using rbo::PredDist;

// Dense networks: one deterministic pass, std = 0. Variational networks:
// population mean/std over `mc_samples` weight draws, each shared by all rows.
PredDist predict(const Network& net, std::span<const FeatureRow> rows, std::size_t mc_samples, Rng& rng);

}  // namespace rbo::neural
