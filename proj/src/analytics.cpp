#include "rbo/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "rbo/error.hpp"
#include "rbo/stats.hpp"

namespace rbo::analytics {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b, std::size_t min_len,
                         const char* what) {
  if (a.size() != b.size()) {
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
  if (a.size() < min_len) {
    throw DataError(std::string(what) + ": need at least " + std::to_string(min_len) + " values");
  }
}

std::int64_t tie_pairs(std::int64_t run) { return run * (run - 1) / 2; }

// Counts strict inversions while sorting `v` in place.
std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo,
                              std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b, 2, "kendall_tau");
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) throw DataError("kendall_tau: NaN input");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a[x] != a[y] ? a[x] < a[y] : b[x] < b[y];
  });

  std::int64_t ties_a = 0, ties_joint = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && a[order[j]] == a[order[i]]) ++j;
    ties_a += tie_pairs(static_cast<std::int64_t>(j - i));
    for (std::size_t k = i; k < j;) {
      std::size_t l = k;
      while (l < j && b[order[l]] == b[order[k]]) ++l;
      ties_joint += tie_pairs(static_cast<std::int64_t>(l - k));
      k = l;
    }
    i = j;
  }

  std::vector<double> sorted_b(n), scratch(n);
  for (std::size_t i = 0; i < n; ++i) sorted_b[i] = b[order[i]];
  const std::int64_t swaps = count_inversions(sorted_b, scratch, 0, n);

  std::int64_t ties_b = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted_b[j] == sorted_b[i]) ++j;
    ties_b += tie_pairs(static_cast<std::int64_t>(j - i));
    i = j;
  }

  const std::int64_t total = tie_pairs(static_cast<std::int64_t>(n));
  const std::int64_t denom_a = total - ties_a;
  const std::int64_t denom_b = total - ties_b;
  if (denom_a == 0 || denom_b == 0) return 0.0;
  const std::int64_t numerator = total - ties_a - ties_b + ties_joint - 2 * swaps;
  return static_cast<double>(numerator) /
         std::sqrt(static_cast<double>(denom_a) * static_cast<double>(denom_b));
}

double r_squared(std::span<const double> y, std::span<const double> yhat) {
  require_same_length(y, yhat, 2, "r_squared");
  const double mu = mean_of(y);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - mu) * (y[i] - mu);
  }
  if (!(ss_tot > 0.0)) throw DataError("r_squared: ground truth has zero variance");
  return 1.0 - ss_res / ss_tot;
}

double top_k_fraction(std::span<const std::size_t> found_ids, std::span<const std::size_t> true_top_ids) {
  if (true_top_ids.empty()) throw DataError("top_k_fraction: empty top set");
  const std::unordered_set<std::size_t> top(true_top_ids.begin(), true_top_ids.end());
  const std::unordered_set<std::size_t> found(found_ids.begin(), found_ids.end());
  std::size_t hits = 0;
  for (std::size_t id : found) hits += top.count(id);
  return static_cast<double>(hits) / static_cast<double>(top.size());
}

double bo_auc(std::span<const double> fractions, std::size_t n_init, std::size_t budget) {
  if (budget < 1) throw DataError("bo_auc: budget must be at least 1");
  if (fractions.size() < n_init + budget) {
    throw DataError("bo_auc: trace has " + std::to_string(fractions.size()) + " evaluations, expected " +
                    std::to_string(n_init + budget));
  }
  double sum = 0.0;
  for (std::size_t e = 0; e < budget; ++e) sum += fractions[n_init + e];
  return sum / static_cast<double>(budget);
}

double bo_auc(const CampaignTrace& trace) {
  if (!trace.valid()) throw DataError("bo_auc: trace status is '" + trace.status + "'");
  std::vector<double> fractions;
  fractions.reserve(trace.evaluations.size());
  for (const auto& e : trace.evaluations) fractions.push_back(e.frac_top_k);
  return bo_auc(fractions, trace.n_init(), trace.budget());
}

Correlation pearson_r(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b, 3, "pearson_r");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DataError("pearson_r: zero variance input");
  Correlation out;
  out.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  const double dof = static_cast<double>(a.size()) - 2.0;
  if (std::fabs(out.r) >= 1.0) {
    out.p = 0.0;
  } else {
    const double t = out.r * std::sqrt(dof / (1.0 - out.r * out.r));
    out.p = stats::student_t_two_sided_p(t, dof);
  }
  return out;
}

TTest t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("t_test: each sample needs at least two values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  double ssa = 0.0, ssb = 0.0;
  for (double x : a) ssa += (x - ma) * (x - ma);
  for (double x : b) ssb += (x - mb) * (x - mb);
  const double dof = na + nb - 2.0;
  const double pooled = (ssa + ssb) / dof;
  const double diff = ma - mb;
  TTest out;
  if (!(pooled > 0.0)) {
    // Both samples constant: equal means give no evidence, different means are separated exactly.
    if (diff == 0.0) return out;
    out.t = diff > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.p = 0.0;
    return out;
  }
  out.t = diff / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  out.p = stats::student_t_two_sided_p(out.t, dof);
  return out;
}

Interval ci95(std::span<const double> sample) {
  if (sample.size() < 2) throw DataError("ci95: need at least two values");
  const double n = static_cast<double>(sample.size());
  Interval out;
  out.mean = mean_of(sample);
  double ss = 0.0;
  for (double x : sample) ss += (x - out.mean) * (x - out.mean);
  const double s = std::sqrt(ss / (n - 1.0));
  out.half_width = stats::student_t_quantile(0.975, n - 1.0) * s / std::sqrt(n);
  return out;
}

AucSummary summarize_auc(std::span<const double> per_seed_auc) {
  AucSummary out;
  out.values.assign(per_seed_auc.begin(), per_seed_auc.end());
  out.n_seeds = out.values.size();
  if (out.values.empty()) return out;
  if (out.values.size() == 1) {
    out.mean = out.values.front();
    return out;
  }
  const Interval ci = ci95(out.values);
  out.mean = ci.mean;
  out.ci_half_width = ci.half_width;
  return out;
}

// ---------------------------------------------------------------------------
// Roughness index

DistanceMatrix::DistanceMatrix(std::size_t n) : n_(n), data_(n < 2 ? 0 : n * (n - 1) / 2, 0.0) {}

DistanceMatrix DistanceMatrix::tanimoto(std::span<const chem::Fingerprint> features) {
  DistanceMatrix d(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      d.set(i, j, 1.0 - chem::tanimoto(features[i], features[j]));
    }
  }
  return d;
}

std::vector<Merge> complete_linkage(const DistanceMatrix& distances) {
  const std::size_t n = distances.size();
  std::vector<Merge> merges;
  if (n < 2) return merges;
  DistanceMatrix d = distances;  // updated in place by the Lance-Williams rule
  std::vector<bool> active(n, true);
  std::vector<std::size_t> chain;
  chain.reserve(n);
  std::size_t remaining = n;
  std::size_t next_start = 0;

  while (remaining > 1) {
    if (chain.empty()) {
      while (!active[next_start]) ++next_start;
      chain.push_back(next_start);
    }
    const std::size_t a = chain.back();
    const bool has_prev = chain.size() >= 2;
    const std::size_t prev = has_prev ? chain[chain.size() - 2] : n;

    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    if (has_prev) {
      best = prev;
      best_d = d(a, prev);
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == a) continue;
      const double dc = d(a, c);
      if (dc < best_d) {
        best_d = dc;
        best = c;
      }
    }

    if (has_prev && best == prev) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, prev), drop = std::max(a, prev);
      merges.push_back({keep, drop, best_d});
      for (std::size_t k = 0; k < n; ++k) {
        if (!active[k] || k == keep || k == drop) continue;
        d.set(keep, k, std::max(d(keep, k), d(drop, k)));
      }
      active[drop] = false;
      --remaining;
    } else {
      chain.push_back(best);
    }
  }
  std::stable_sort(merges.begin(), merges.end(),
                   [](const Merge& x, const Merge& y) { return x.height < y.height; });
  return merges;
}

RogiReport rogi(const DistanceMatrix& distances, std::span<const double> targets, double step) {
  const std::size_t n = targets.size();
  if (n < 2) throw DataError("rogi: degenerate dataset (need at least two points)");
  if (distances.size() != n) throw DataError("rogi: distance matrix size does not match targets");
  if (!(step > 0.0 && step <= 1.0)) throw ConfigError("rogi: step must lie in (0, 1]");
  for (double y : targets) {
    if (!std::isfinite(y)) throw DataError("rogi: non-finite target");
  }
  const auto m = static_cast<std::size_t>(std::llround(1.0 / step));
  RogiReport report;
  report.n = n;
  report.thresholds.resize(m + 1);
  for (std::size_t i = 0; i <= m; ++i) report.thresholds[i] = static_cast<double>(i) / static_cast<double>(m);

  const double mu = mean_of(targets);
  double var = 0.0;
  for (double y : targets) var += (y - mu) * (y - mu);
  var /= static_cast<double>(n);
  if (!(var > 0.0)) {
    report.dispersion.assign(m + 1, 0.0);
    report.rogi = 0.0;
    return report;
  }
  const double sd = std::sqrt(var);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (targets[i] - mu) / sd;

  const std::vector<Merge> merges = complete_linkage(distances);

  // Union-find with per-root sums; dispersion about the global mean (0 after standardisation).
  std::vector<std::size_t> parent(n), count(n, 1);
  std::vector<double> sum(z);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  constexpr double kTol = 1e-12;
  std::size_t next = 0;
  report.dispersion.resize(m + 1);
  double integral = 0.0;
  for (std::size_t i = 0; i <= m; ++i) {
    const double t = report.thresholds[i];
    while (next < merges.size() && merges[next].height <= t + kTol) {
      const std::size_t ra = find(merges[next].a), rb = find(merges[next].b);
      if (ra != rb) {
        parent[rb] = ra;
        sum[ra] += sum[rb];
        count[ra] += count[rb];
      }
      ++next;
    }
    // sum_c n_c * mean_c^2, recomputed from scratch so a full merge gives exactly ~0.
    double weighted = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (parent[r] == r) weighted += sum[r] * sum[r] / static_cast<double>(count[r]);
    }
    const double sigma = std::sqrt(std::max(0.0, weighted / static_cast<double>(n)));
    report.dispersion[i] = sigma;
    integral += (1.0 - sigma) * step;
  }
  report.rogi = integral;
  return report;
}

RogiReport rogi(std::span<const chem::Fingerprint> features, std::span<const double> targets, double step) {
  if (features.size() != targets.size()) throw DataError("rogi: features and targets differ in length");
  if (features.size() < 2) throw DataError("rogi: degenerate dataset (need at least two points)");
  return rogi(DistanceMatrix::tanimoto(features), targets, step);
}

}  // namespace rbo::analytics
