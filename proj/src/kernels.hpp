#pragma once

// Hot elementwise loops. kernels.cpp is compiled with -ffast-math so the
// transcendental calls vectorise; nothing here tests for NaN or infinity,
// callers do that on the results.

#include <cstddef>

namespace rbo::kernels {

struct AdamCoeffs {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double step = 1e-3;         // lr / (1 - beta1^t)
  double inv_sqrt_c2 = 1.0;   // 1 / sqrt(1 - beta2^t)
  double eps = 1e-8;
};

// p -= step * m_hat / (sqrt(v_hat) + eps) after folding g into (m, v).
void adam(double* __restrict p, const double* __restrict g, double* __restrict m, double* __restrict v,
          std::size_t n, const AdamCoeffs& c);

// Variational block of n (mu, rho) pairs. Adds the standard-normal prior KL
// gradient (scaled by kl_weight), takes an Adam step on both, refreshes
// sigma = softplus(rho) and slope = sigmoid(rho), and clears the gradients.
void adam_variational(double* mu, double* rho, double* g_mu, double* g_rho, double* m_mu, double* m_rho,
                      double* v_mu, double* v_rho, double* sigma, double* slope, std::size_t n, double kl_weight,
                      const AdamCoeffs& c);

void softplus_slope(const double* rho, double* sigma, double* slope, std::size_t n);

// Replays `steps` Adam updates driven only by the prior KL gradient, starting
// from zero moments. coeffs[s] holds the coefficients of step s+1.
void replay_prior_mu(double* mu, std::size_t n, double kl_weight, const AdamCoeffs* coeffs, std::size_t steps);
void replay_prior_rho(double* rho, std::size_t n, double kl_weight, const AdamCoeffs* coeffs, std::size_t steps);

// In place: pairs of uniforms in (0, 1] become pairs of standard normals. n must be even.
void box_muller(double* values, std::size_t n);

// eff = mu + sigma * zeta over n slots.
void reparameterize(const double* mu, const double* sigma, const double* zeta, double* eff, std::size_t n);

}  // namespace rbo::kernels
