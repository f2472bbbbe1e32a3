#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rbo/error.hpp"
#include "rbo/gp.hpp"

using namespace rbo;
using namespace rbo::gp;

namespace {

std::vector<chem::Fingerprint> random_fps(Rng& rng, std::size_t n) {
  std::vector<chem::Fingerprint> x;
  for (std::size_t i = 0; i < n; ++i) x.push_back(oracle::random_fingerprint(rng, 64, 0.3));
  return x;
}

}  // namespace

TEST_SUITE("gp") {
  TEST_CASE("cholesky reconstructs the matrix") {
    Rng rng = make_rng(1);
    const std::size_t n = 7;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) b(i, j) = uniform01(rng);
    }
    const Eigen::MatrixXd a = b * b.transpose() + Eigen::MatrixXd::Identity(n, n);
    std::vector<double> flat(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) flat[i * n + j] = a(i, j);
    }
    REQUIRE(cholesky(flat, n));
    Eigen::MatrixXd l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) l(i, j) = flat[i * n + j];
    }
    CHECK((l * l.transpose() - a).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(l(0, 1) == 0.0);

    std::vector<double> indefinite = {1, 2, 2, 1};
    CHECK_FALSE(cholesky(indefinite, 2));
  }

  TEST_CASE("cholesky path matches the dense inverse") {
    Rng rng = make_rng(2);
    for (int i = 0; i < 20; ++i) CHECK(gradcheck::gp_dense_gap(rng) <= 1e-8);
  }

  TEST_CASE("hyperparameter gradient matches finite differences") {
    Rng rng = make_rng(3);
    for (int i = 0; i < 20; ++i) CHECK(gradcheck::gp_error(rng) <= 1e-4);
  }

  TEST_CASE("vanishing noise interpolates") {
    Rng rng = make_rng(4);
    CHECK(gradcheck::gp_interpolation_gap(rng) <= 1e-4);
  }

  TEST_CASE("posterior variance never exceeds the prior") {
    Rng rng = make_rng(5);
    const auto x = random_fps(rng, 15), q = random_fps(rng, 30);
    const auto y = oracle::random_vector(rng, 15);
    const GPModel model(x, y, 0.4, std::log(0.05));
    const auto post = model.posterior(q);
    for (double s : post.std) CHECK(s * s <= model.outputscale() + 1e-12);
    const auto noisy = model.posterior(q, true);
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(noisy.std[i] * noisy.std[i] == doctest::Approx(post.std[i] * post.std[i] + model.noise()));
    }
  }

  TEST_CASE("huge noise shrinks the mean to zero") {
    Rng rng = make_rng(6);
    const auto x = random_fps(rng, 10);
    const auto y = oracle::random_vector(rng, 10, 1.0, 3.0);
    const GPModel model(x, y, 0.0, std::log(1e12));
    for (double m : model.posterior(x).mean) CHECK(std::fabs(m) <= 1e-9);
  }

  TEST_CASE("duplicate points stay finite") {
    Rng rng = make_rng(7);
    auto x = random_fps(rng, 6);
    x.push_back(x[0]);
    std::vector<double> y = oracle::random_vector(rng, 6);
    y.push_back(y[0]);
    const GPModel model(x, y, 0.0, std::log(1e-12));
    CHECK(std::isfinite(model.negative_mll()));
    CHECK(model.jitter() >= 0.0);
  }

  TEST_CASE("fit never ends worse than it starts") {
    Rng rng = make_rng(8);
    const auto x = random_fps(rng, 25);
    const auto y = oracle::random_vector(rng, 25);
    FitTrace trace;
    const GPModel model = fit_gp(x, y, {}, &trace);
    REQUIRE(trace.loss.size() == 101);
    CHECK(model.negative_mll() <= trace.loss.front());
    CHECK(model.negative_mll() == doctest::Approx(trace.loss[trace.best_step]));
    CHECK_THROWS_AS(fit_gp({x[0]}, {0.0}, {}), DataError);
    GpFitConfig none;
    none.steps = 0;
    FitTrace flat;
    fit_gp(x, y, none, &flat);
    CHECK(flat.loss.size() == 1);
    GpFitConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(fit_gp(x, y, bad), ConfigError);
  }
}
