#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rbo::kernels {

namespace {

inline double adam_delta(double g, double& m, double& v, const AdamCoeffs& c) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  return c.step * m / (std::sqrt(v) * c.inv_sqrt_c2 + c.eps);
}

// softplus and its derivative; large arguments are clamped before exp so the
// vectorised path never divides infinities.
inline void softplus_pair(double x, double& sigma, double& slope) {
  const double e = std::exp(std::min(x, 30.0));
  sigma = x > 30.0 ? x : std::log1p(e);
  slope = e / (1.0 + e);
}

constexpr std::size_t kBlock = 256;

}  // namespace

void adam(double* __restrict p, const double* __restrict g, double* __restrict m, double* __restrict v,
          std::size_t n, const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) p[i] -= adam_delta(g[i], m[i], v[i], c);
}

void adam_variational(double* __restrict mu, double* __restrict rho, double* __restrict g_mu,
                      double* __restrict g_rho, double* __restrict m_mu, double* __restrict m_rho,
                      double* __restrict v_mu, double* __restrict v_rho, double* __restrict sigma,
                      double* __restrict slope, std::size_t n, double kl_weight, const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double gm = g_mu[i] + kl_weight * mu[i];
    const double gr = g_rho[i] + kl_weight * (sigma[i] - 1.0 / sigma[i]) * slope[i];
    mu[i] -= adam_delta(gm, m_mu[i], v_mu[i], c);
    rho[i] -= adam_delta(gr, m_rho[i], v_rho[i], c);
    softplus_pair(rho[i], sigma[i], slope[i]);
    g_mu[i] = 0.0;
    g_rho[i] = 0.0;
  }
}

void softplus_slope(const double* __restrict rho, double* __restrict sigma, double* __restrict slope, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) softplus_pair(rho[i], sigma[i], slope[i]);
}

void replay_prior_mu(double* mu, std::size_t n, double kl_weight, const AdamCoeffs* coeffs, std::size_t steps) {
  double m[kBlock], v[kBlock];
  for (std::size_t lo = 0; lo < n; lo += kBlock) {
    const std::size_t len = std::min(kBlock, n - lo);
    double* x = mu + lo;
    std::fill_n(m, len, 0.0);
    std::fill_n(v, len, 0.0);
    for (std::size_t s = 0; s < steps; ++s) {
      const AdamCoeffs& c = coeffs[s];
      for (std::size_t i = 0; i < len; ++i) x[i] -= adam_delta(kl_weight * x[i], m[i], v[i], c);
    }
  }
}

void replay_prior_rho(double* rho, std::size_t n, double kl_weight, const AdamCoeffs* coeffs, std::size_t steps) {
  double m[kBlock], v[kBlock], sigma[kBlock], slope[kBlock];
  for (std::size_t lo = 0; lo < n; lo += kBlock) {
    const std::size_t len = std::min(kBlock, n - lo);
    double* x = rho + lo;
    std::fill_n(m, len, 0.0);
    std::fill_n(v, len, 0.0);
    for (std::size_t i = 0; i < len; ++i) softplus_pair(x[i], sigma[i], slope[i]);
    for (std::size_t s = 0; s < steps; ++s) {
      const AdamCoeffs& c = coeffs[s];
      for (std::size_t i = 0; i < len; ++i) {
        const double g = kl_weight * (sigma[i] - 1.0 / sigma[i]) * slope[i];
        x[i] -= adam_delta(g, m[i], v[i], c);
        softplus_pair(x[i], sigma[i], slope[i]);
      }
    }
  }
}

void box_muller(double* values, std::size_t n) {
  const std::size_t h = n / 2;
  double* __restrict u1 = values;
  double* __restrict u2 = values + h;
  // Separate loops keep sin and cos as vector calls instead of scalar sincos.
  double theta[kBlock];
  for (std::size_t lo = 0; lo < h; lo += kBlock) {
    const std::size_t len = std::min(kBlock, h - lo);
    double* __restrict a = u1 + lo;
    double* __restrict b = u2 + lo;
    for (std::size_t i = 0; i < len; ++i) {
      a[i] = std::sqrt(-2.0 * std::log(a[i]));
      theta[i] = 2.0 * std::numbers::pi * b[i];
    }
    for (std::size_t i = 0; i < len; ++i) b[i] = a[i] * std::sin(theta[i]);
    for (std::size_t i = 0; i < len; ++i) a[i] *= std::cos(theta[i]);
  }
}

void reparameterize(const double* mu, const double* sigma, const double* zeta, double* eff, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) eff[i] = mu[i] + sigma[i] * zeta[i];
}

}  // namespace rbo::kernels
