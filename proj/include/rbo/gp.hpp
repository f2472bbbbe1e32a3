#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rbo/chem.hpp"
#include "rbo/pred_dist.hpp"

namespace rbo::gp {

// Hyperparameters live in log space: outputscale s = exp(log_outputscale),
// noise variance sigma_n^2 = exp(log_noise).
struct GpFitConfig {
  double learning_rate = 0.01;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  double init_log_outputscale = 0.0;
  double init_log_noise = std::log(0.1);

  void validate() const;
};

// Diagonal jitter tried in order when the Cholesky factorisation fails.
inline constexpr std::array<double, 6> kJitterLadder = {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

// Exact GP with kernel s * tanimoto(x, x') and zero prior mean.
class GPModel {
 public:
  GPModel(std::vector<chem::Fingerprint> features, std::vector<double> targets, double log_outputscale,
          double log_noise);

  // Same training data, new hyperparameters; reuses the Tanimoto Gram matrix.
  GPModel with_hyperparameters(double log_outputscale, double log_noise) const;

  double negative_mll() const;
  // d(negative_mll) / d(log_outputscale, log_noise).
  std::array<double, 2> gradient() const;

  PredDist posterior(std::span<const chem::Fingerprint> queries, bool include_noise = false) const;

  std::size_t size() const noexcept { return targets_.size(); }
  double log_outputscale() const noexcept { return log_outputscale_; }
  double log_noise() const noexcept { return log_noise_; }
  double outputscale() const noexcept { return std::exp(log_outputscale_); }
  double noise() const noexcept { return std::exp(log_noise_); }
  double jitter() const noexcept { return jitter_; }
  const std::vector<double>& alpha() const noexcept { return alpha_; }
  // Row-major lower-triangular factor of K + (sigma_n^2 + jitter) I.
  const std::vector<double>& cholesky_factor() const noexcept { return chol_; }
  const std::vector<double>& tanimoto_gram() const noexcept { return gram_; }
  const std::vector<chem::Fingerprint>& features() const noexcept { return features_; }
  const std::vector<double>& targets() const noexcept { return targets_; }

 private:
  GPModel() = default;
  void factorize();

  std::vector<chem::Fingerprint> features_;
  std::vector<double> targets_;
  std::vector<double> gram_;
  double log_outputscale_ = 0.0;
  double log_noise_ = 0.0;
  double jitter_ = 0.0;
  std::vector<double> chol_;
  std::vector<double> alpha_;
};

struct FitTrace {
  std::vector<double> loss;  // negative MLL of every iterate, initial point first
  std::size_t best_step = 0;
};

// Adam on the negative MLL; returns the best iterate encountered.
GPModel fit_gp(std::vector<chem::Fingerprint> features, std::vector<double> targets, const GpFitConfig& config,
               FitTrace* trace = nullptr);

// In-place Cholesky of a row-major n x n SPD matrix (lower triangle written,
// upper zeroed). Returns false if a pivot is not strictly positive.
bool cholesky(std::vector<double>& a, std::size_t n);

}  // namespace rbo::gp
