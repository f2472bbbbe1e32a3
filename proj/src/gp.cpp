#include "rbo/gp.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "rbo/error.hpp"
#include "rbo/neural.hpp"

namespace rbo::gp {

namespace {

// Solves L x = b in place.
void forward_solve(const std::vector<double>& l, std::size_t n, double* b) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    const double* row = l.data() + i * n;
    for (std::size_t k = 0; k < i; ++k) s -= row[k] * b[k];
    b[i] = s / row[i];
  }
}

// Solves L^T x = b in place.
void backward_solve(const std::vector<double>& l, std::size_t n, double* b) {
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * b[k];
    b[i] = s / l[i * n + i];
  }
}

}  // namespace

void GpFitConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("GP learning rate must be positive");
  if (!std::isfinite(init_log_outputscale) || !std::isfinite(init_log_noise)) {
    throw ConfigError("GP initial hyperparameters must be finite");
  }
}

bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double* rj = a.data() + j * n;
    double d = rj[j];
    for (std::size_t k = 0; k < j; ++k) d -= rj[k] * rj[k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    rj[j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double* ri = a.data() + i * n;
      double s = ri[j];
      for (std::size_t k = 0; k < j; ++k) s -= ri[k] * rj[k];
      ri[j] = s / ljj;
    }
    for (std::size_t k = j + 1; k < n; ++k) rj[k] = 0.0;
  }
  return true;
}

GPModel::GPModel(std::vector<chem::Fingerprint> features, std::vector<double> targets, double log_outputscale,
                 double log_noise)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      log_outputscale_(log_outputscale),
      log_noise_(log_noise) {
  if (features_.size() != targets_.size()) throw DataError("GP: feature/target length mismatch");
  if (features_.empty()) throw DataError("GP: no training data");
  const std::size_t n = features_.size();
  gram_.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double t = chem::tanimoto(features_[i], features_[j]);
      gram_[i * n + j] = t;
      gram_[j * n + i] = t;
    }
  }
  // Unit diagonal even for an all-zero fingerprint, whose self-tanimoto is 0 by convention.
  for (std::size_t i = 0; i < n; ++i) gram_[i * n + i] = 1.0;
  factorize();
}

GPModel GPModel::with_hyperparameters(double log_outputscale, double log_noise) const {
  GPModel m;
  m.features_ = features_;
  m.targets_ = targets_;
  m.gram_ = gram_;
  m.log_outputscale_ = log_outputscale;
  m.log_noise_ = log_noise;
  m.factorize();
  return m;
}

void GPModel::factorize() {
  if (!std::isfinite(log_outputscale_) || !std::isfinite(log_noise_)) {
    throw NumericalError("GP hyperparameters are not finite");
  }
  const std::size_t n = targets_.size();
  const double s = outputscale();
  const double noise_var = noise();
  for (double jitter : kJitterLadder) {
    chol_.resize(n * n);
    for (std::size_t i = 0; i < n * n; ++i) chol_[i] = s * gram_[i];
    for (std::size_t i = 0; i < n; ++i) chol_[i * n + i] += noise_var + jitter;
    if (cholesky(chol_, n)) {
      jitter_ = jitter;
      alpha_ = targets_;
      forward_solve(chol_, n, alpha_.data());
      backward_solve(chol_, n, alpha_.data());
      return;
    }
  }
  throw NumericalError("GP Cholesky failed after jitter " + std::to_string(kJitterLadder.back()));
}

double GPModel::negative_mll() const {
  const std::size_t n = targets_.size();
  double quad = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    quad += targets_[i] * alpha_[i];
    logdet += std::log(chol_[i * n + i]);
  }
  return 0.5 * quad + logdet + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

std::array<double, 2> GPModel::gradient() const {
  // d/dtheta = 0.5 * tr((K^-1 - alpha alpha^T) dK/dtheta)
  const std::size_t n = targets_.size();
  std::vector<double> inv(n * n, 0.0);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    col[j] = 1.0;
    forward_solve(chol_, n, col.data());
    backward_solve(chol_, n, col.data());
    for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
  }
  double tr_scale = 0.0, quad_scale = 0.0, tr_noise = 0.0, quad_noise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = gram_[i * n + j];
      tr_scale += inv[i * n + j] * g;
      quad_scale += alpha_[i] * g * alpha_[j];
    }
    tr_noise += inv[i * n + i];
    quad_noise += alpha_[i] * alpha_[i];
  }
  const double s = outputscale();
  return {0.5 * s * (tr_scale - quad_scale), 0.5 * noise() * (tr_noise - quad_noise)};
}

PredDist GPModel::posterior(std::span<const chem::Fingerprint> queries, bool include_noise) const {
  const std::size_t n = targets_.size();
  const double s = outputscale();
  PredDist out;
  out.mean.resize(queries.size());
  out.std.resize(queries.size());
  std::vector<double> k(n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      k[i] = s * chem::tanimoto(queries[q], features_[i]);
      mean += k[i] * alpha_[i];
    }
    forward_solve(chol_, n, k.data());
    double explained = 0.0;
    for (double v : k) explained += v * v;
    const double var = std::max(0.0, s - explained) + (include_noise ? noise() : 0.0);
    out.mean[q] = mean;
    out.std[q] = std::sqrt(var);
  }
  return out;
}

GPModel fit_gp(std::vector<chem::Fingerprint> features, std::vector<double> targets, const GpFitConfig& config,
               FitTrace* trace) {
  config.validate();
  if (features.size() < 2) throw DataError("GP fit needs at least two training points");
  for (double y : targets) {
    if (!std::isfinite(y)) throw DataError("GP fit: non-finite target");
  }
  GPModel model(std::move(features), std::move(targets), config.init_log_outputscale, config.init_log_noise);
  std::vector<double> params = {model.log_outputscale(), model.log_noise()};
  neural::AdamState adam(2);
  neural::AdamOptions options;
  options.learning_rate = config.learning_rate;

  double best_loss = model.negative_mll();
  if (!std::isfinite(best_loss)) throw NumericalError("non-finite negative MLL at step 0");
  GPModel best = model;
  std::size_t best_step = 0;
  if (trace) trace->loss = {best_loss};

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const auto g = model.gradient();
    neural::adam_step(params, g, adam, options);
    model = model.with_hyperparameters(params[0], params[1]);
    const double loss = model.negative_mll();
    if (!std::isfinite(loss)) throw NumericalError("non-finite negative MLL at step " + std::to_string(step));
    if (trace) trace->loss.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best = model;
      best_step = step;
    }
  }
  if (trace) trace->best_step = best_step;
  return best;
}

}  // namespace rbo::gp
