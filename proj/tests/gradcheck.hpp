#pragma once

// Central finite-difference checks on random small problems. Each function
// builds one instance from `rng` and returns the relative error
// |analytic - numeric| / max(|analytic|, |numeric|) in the 2-norm.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "rbo/gp.hpp"
#include "rbo/neural.hpp"

namespace gradcheck {

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

inline std::vector<double> numeric_gradient(std::vector<double> x, const std::function<double(const std::vector<double>&)>& f,
                                            double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

struct NetProblem {
  rbo::neural::Network net;
  std::vector<rbo::neural::FeatureRow> rows;
  std::vector<double> targets;
  std::vector<std::size_t> points;
  std::vector<rbo::data::Pair> pairs;
  rbo::neural::WeightNoise noise;
};

// At most three layers of at most ten units, random dense inputs.
inline NetProblem random_net_problem(rbo::Rng& rng, bool variational) {
  using namespace rbo::neural;
  NetworkSpec spec;
  spec.input_dim = 2 + rbo::uniform_index(rng, 5);
  spec.hidden.assign(1 + rbo::uniform_index(rng, 2), 0);
  for (auto& h : spec.hidden) h = 2 + rbo::uniform_index(rng, 9);
  spec.layer_kind = variational ? LayerKind::kVariational : LayerKind::kDense;
  NetProblem p{Network::initialized(spec, rng, 0.2), {}, {}, {}, {}, {}};
  for (double& v : p.net.params()) v += 0.3 * (2.0 * rbo::uniform01(rng) - 1.0);
  const std::size_t n = 4 + rbo::uniform_index(rng, 5);
  for (std::size_t i = 0; i < n; ++i) {
    p.rows.push_back(dense_row(oracle::random_vector(rng, spec.input_dim)));
    p.targets.push_back(2.0 * rbo::uniform01(rng) - 1.0);
    p.points.push_back(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) p.pairs.push_back({i, j});
  }
  if (variational) p.noise = sample_noise(p.net, rng);
  return p;
}

inline double net_error(const NetProblem& p, rbo::neural::LossKind loss, double kl_weight) {
  using namespace rbo::neural;
  const Batch batch{p.rows, p.targets, p.points, p.pairs};
  const WeightNoise* noise = p.net.variational() ? &p.noise : nullptr;
  std::vector<double> analytic;
  loss_and_gradient(p.net, batch, loss, 0.0, noise, kl_weight, analytic);
  Network probe = p.net;
  const auto f = [&](const std::vector<double>& x) {
    std::copy(x.begin(), x.end(), probe.params().begin());
    std::vector<double> unused;
    return loss_and_gradient(probe, batch, loss, 0.0, noise, kl_weight, unused);
  };
  const std::vector<double> x(p.net.params().begin(), p.net.params().end());
  return relative_error(analytic, numeric_gradient(x, f));
}

// Keeps every pair's hinge argument away from zero so the loss is smooth
// within the finite-difference step.
inline bool ranking_away_from_kink(const NetProblem& p) {
  const rbo::neural::WeightNoise* noise = p.net.variational() ? &p.noise : nullptr;
  std::vector<double> out;
  for (const auto& row : p.rows) out.push_back(rbo::neural::forward_with_noise(p.net, row, noise));
  for (const auto& pr : p.pairs) {
    if (std::fabs(out[pr.i] - out[pr.j]) < 1e-3) return false;
  }
  return true;
}

inline double mse_error(rbo::Rng& rng) {
  const bool variational = rbo::uniform01(rng) < 0.5;
  return net_error(random_net_problem(rng, variational), rbo::neural::LossKind::kMse, 0.0);
}

inline double ranking_error(rbo::Rng& rng) {
  const bool variational = rbo::uniform01(rng) < 0.5;
  NetProblem p = random_net_problem(rng, variational);
  while (!ranking_away_from_kink(p)) p = random_net_problem(rng, variational);
  return net_error(p, rbo::neural::LossKind::kRanking, 0.0);
}

// Gradient of the KL term alone: the difference of two objectives that share
// the data term.
inline double kl_error(rbo::Rng& rng) {
  using namespace rbo::neural;
  NetProblem p = random_net_problem(rng, true);
  const Batch batch{p.rows, p.targets, p.points, p.pairs};
  std::vector<double> with_kl, without_kl;
  loss_and_gradient(p.net, batch, LossKind::kMse, 0.0, &p.noise, 1.0, with_kl);
  loss_and_gradient(p.net, batch, LossKind::kMse, 0.0, &p.noise, 0.0, without_kl);
  for (std::size_t i = 0; i < with_kl.size(); ++i) with_kl[i] -= without_kl[i];
  Network probe = p.net;
  const auto f = [&](const std::vector<double>& x) {
    std::copy(x.begin(), x.end(), probe.params().begin());
    return network_kl(probe);
  };
  const std::vector<double> x(p.net.params().begin(), p.net.params().end());
  return relative_error(with_kl, numeric_gradient(x, f));
}

// Hyperparameter gradient of the negative MLL, n <= 15.
inline double gp_error(rbo::Rng& rng) {
  const std::size_t n = 3 + rbo::uniform_index(rng, 13);
  std::vector<rbo::chem::Fingerprint> x;
  for (std::size_t i = 0; i < n; ++i) x.push_back(oracle::random_fingerprint(rng, 64, 0.3));
  const auto y = oracle::random_vector(rng, n, -2.0, 2.0);
  const double ls = 2.0 * rbo::uniform01(rng) - 1.0;
  const double ln = -4.0 + 3.0 * rbo::uniform01(rng);
  const rbo::gp::GPModel model(x, y, ls, ln);
  const auto g = model.gradient();
  const auto f = [&](const std::vector<double>& h) { return model.with_hyperparameters(h[0], h[1]).negative_mll(); };
  return relative_error({g[0], g[1]}, numeric_gradient({ls, ln}, f));
}

// Largest absolute gap between the Cholesky path and the dense-inverse
// reference over posterior mean, variance and negative MLL, n <= 20.
inline double gp_dense_gap(rbo::Rng& rng) {
  const std::size_t n = 2 + rbo::uniform_index(rng, 19);
  std::vector<rbo::chem::Fingerprint> x, q;
  for (std::size_t i = 0; i < n; ++i) x.push_back(oracle::random_fingerprint(rng, 64, 0.3));
  for (std::size_t i = 0; i < 5; ++i) q.push_back(oracle::random_fingerprint(rng, 64, 0.3));
  q.push_back(x[0]);
  const auto y = oracle::random_vector(rng, n, -2.0, 2.0);
  const double s = std::exp(2.0 * rbo::uniform01(rng) - 1.0);
  const double noise = std::exp(-5.0 + 4.0 * rbo::uniform01(rng));
  const rbo::gp::GPModel model(x, y, std::log(s), std::log(noise));
  const auto ref = oracle::dense_gp(x, y, s, noise + model.jitter());
  double gap = std::fabs(model.negative_mll() - ref.neg_mll);
  const auto post = model.posterior(q);
  for (std::size_t k = 0; k < q.size(); ++k) {
    Eigen::VectorXd kq(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) kq[static_cast<Eigen::Index>(i)] = s * oracle::tanimoto(q[k], x[i]);
    const double mean = kq.dot(ref.alpha);
    const double var = s - kq.dot(ref.k_inv * kq);
    gap = std::max(gap, std::fabs(post.mean[k] - mean));
    gap = std::max(gap, std::fabs(post.std[k] * post.std[k] - std::max(0.0, var)));
  }
  return gap;
}

// |posterior mean - target| at the training points as the noise goes to 1e-8.
inline double gp_interpolation_gap(rbo::Rng& rng) {
  std::vector<rbo::chem::Fingerprint> x;
  while (x.size() < 12) {
    auto fp = oracle::random_fingerprint(rng, 128, 0.3);
    if (std::find(x.begin(), x.end(), fp) == x.end()) x.push_back(std::move(fp));
  }
  const auto y = oracle::random_vector(rng, x.size(), -2.0, 2.0);
  const rbo::gp::GPModel model(x, y, 0.0, std::log(1e-8));
  const auto post = model.posterior(x);
  double gap = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) gap = std::max(gap, std::fabs(post.mean[i] - y[i]));
  return gap;
}

}  // namespace gradcheck
