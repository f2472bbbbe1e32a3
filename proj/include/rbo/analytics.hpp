#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rbo/chem.hpp"
#include "rbo/trace.hpp"

namespace rbo::analytics {

// Kendall tau-b, O(n log n). Returns 0 when either input is fully tied.
double kendall_tau(std::span<const double> a, std::span<const double> b);

// 1 - SS_res / SS_tot. Throws DataError when y has zero variance.
double r_squared(std::span<const double> y, std::span<const double> yhat);

double top_k_fraction(std::span<const std::size_t> found_ids, std::span<const std::size_t> true_top_ids);

// Mean of the discovery fraction over the `budget` evaluations that follow
// the `n_init` initial ones. `fractions[e]` is the fraction after evaluation e+1.
double bo_auc(std::span<const double> fractions, std::size_t n_init, std::size_t budget);
double bo_auc(const CampaignTrace& trace);

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

// Sample Pearson correlation with a two-sided t-test p-value (n - 2 dof).
Correlation pearson_r(std::span<const double> a, std::span<const double> b);

struct TTest {
  double t = 0.0;
  double p = 1.0;
};

// Two-sample pooled-variance Student's t-test, two-sided.
TTest t_test(std::span<const double> a, std::span<const double> b);

struct Interval {
  double mean = 0.0;
  double half_width = 0.0;
};

// mean +/- t_{0.975, n-1} * s / sqrt(n).
Interval ci95(std::span<const double> sample);

struct AucSummary {
  std::vector<double> values;
  double mean = 0.0;
  double ci_half_width = 0.0;
  std::size_t n_seeds = 0;
};

AucSummary summarize_auc(std::span<const double> per_seed_auc);

// Condensed symmetric distance matrix (upper triangle, row-major).
class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::size_t n);
  static DistanceMatrix tanimoto(std::span<const chem::Fingerprint> features);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return i == j ? 0.0 : data_[index(i, j)]; }
  void set(std::size_t i, std::size_t j, double d) { data_[index(i, j)] = d; }

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * n_ - i * (i + 1) / 2 + (j - i - 1);
  }
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double height = 0.0;
};

// Complete-linkage agglomeration by the nearest-neighbour chain algorithm.
// Merges are returned sorted by height; `a`/`b` are representative point indices.
std::vector<Merge> complete_linkage(const DistanceMatrix& distances);

struct RogiReport {
  std::vector<double> thresholds;
  std::vector<double> dispersion;
  double rogi = 0.0;
  std::size_t n = 0;
};

// Targets are standardised internally; the dispersion at each threshold is the
// size-weighted population std of cluster means after cutting the dendrogram
// at that height (merges with height <= t applied).
RogiReport rogi(const DistanceMatrix& distances, std::span<const double> targets, double step = 0.01);
RogiReport rogi(std::span<const chem::Fingerprint> features, std::span<const double> targets,
                double step = 0.01);

}  // namespace rbo::analytics
