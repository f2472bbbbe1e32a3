// Acceptance checks. Prints one PASS/FAIL line per criterion; pass criterion
// numbers as arguments to run a subset. Exit status 1 if any selected
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracle_surrogate.hpp"
#include "oracles.hpp"
#include "rbo/analytics.hpp"
#include "rbo/bayesopt.hpp"
#include "rbo/chem.hpp"
#include "rbo/experiment.hpp"
#include "smiles_writer.hpp"

using namespace rbo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng = make_rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 48);
    auto a = oracle::random_vector(rng, n), b = oracle::random_vector(rng, n);
    // Some coarse values so tau sees ties.
    if (trial % 2 == 0) {
      for (double& x : a) x = std::round(4.0 * x);
    }
    const auto keep = [&](double x) { worst = std::max(worst, x); };
    keep(std::fabs(analytics::kendall_tau(a, b) - oracle::kendall_tau(a, b)));
    keep(std::fabs(analytics::r_squared(b, a) - oracle::r_squared(b, a)));
    const auto pr = analytics::pearson_r(a, b);
    const auto po = oracle::pearson(a, b);
    keep(std::fabs(pr.r - po.r));
    keep(std::fabs(pr.p - po.p));
    const auto tt = analytics::t_test(a, b);
    const auto to = oracle::t_test(a, b);
    keep(std::fabs(tt.t - to.t));
    keep(std::fabs(tt.p - to.p));
    const auto ci = analytics::ci95(a);
    keep(std::fabs(ci.mean - static_cast<double>(oracle::mean(a))));
    keep(std::fabs(ci.half_width - oracle::ci95_half_width(a)));
  }
  return {worst <= 1e-12, fmt("100 instances, max |diff| %.3g <= 1e-12", worst)};
}

Outcome gradient_checks() {
  Rng rng = make_rng(202);
  double mse = 0, rank = 0, kl = 0, gp = 0;
  for (int i = 0; i < 20; ++i) {
    mse = std::max(mse, gradcheck::mse_error(rng));
    rank = std::max(rank, gradcheck::ranking_error(rng));
    kl = std::max(kl, gradcheck::kl_error(rng));
    gp = std::max(gp, gradcheck::gp_error(rng));
  }
  const double worst = std::max({mse, rank, kl, gp});
  return {worst <= 1e-4,
          fmt("20 instances each, max rel err mse %.2g ranking %.2g kl %.2g gp %.2g <= 1e-4", mse, rank, kl, gp)};
}

Outcome gp_equivalence() {
  Rng rng = make_rng(303);
  double dense = 0.0;
  for (int i = 0; i < 20; ++i) dense = std::max(dense, gradcheck::gp_dense_gap(rng));
  const double interp = gradcheck::gp_interpolation_gap(rng);
  return {dense <= 1e-8 && interp <= 1e-6,
          fmt("max gap to dense inverse %.3g <= 1e-8; interpolation gap at noise 1e-8 %.3g <= 1e-6", dense, interp)};
}

Outcome fingerprint_invariance() {
  std::ifstream in(RBO_TEST_DATA_DIR "/corpus.smi");
  std::vector<std::string> corpus;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) corpus.push_back(line);
  }
  Rng rng = make_rng(404);
  std::size_t mismatches = 0, self_fail = 0, checked = 0;
  for (const auto& s : corpus) {
    const auto g = chem::parse_smiles(s);
    const auto ref = chem::morgan_fingerprint(g);
    for (int k = 0; k < 10; ++k) {
      const auto fp = chem::morgan_fingerprint(chem::parse_smiles(testing_util::random_smiles(g, rng)));
      mismatches += fp != ref;
      self_fail += chem::tanimoto(fp, fp) != 1.0;
      ++checked;
    }
  }
  return {corpus.size() == 100 && mismatches == 0 && self_fail == 0,
          fmt("%zu molecules, %zu permutations, %zu mismatches, %zu self-similarity failures", corpus.size(), checked,
              mismatches, self_fail)};
}

Outcome oracle_campaign() {
  data::SyntheticParams p;
  p.n = 2000;
  p.seed = 5;
  const auto ds = data::generate_synthetic(p);
  bayesopt::CampaignConfig c;
  c.acquisition = bayesopt::Acquisition::kGreedy;
  Rng rng = make_rng(c.seed);
  const auto truth = bayesopt::run_campaign(ds, c, rng, oracle::truth_factory());
  const double oracle_auc = analytics::bo_auc(truth);
  const double final_frac = truth.evaluations.back().frac_top_k;
  bool ok = truth.valid() && oracle_auc >= 0.5 && final_frac == 1.0;
  std::string detail = fmt("truth auc %.4f >= 0.5, final fraction %.2f == 1", oracle_auc, final_frac);

  const std::vector<std::pair<surrogate::Kind, surrogate::Mode>> trained = {
      {surrogate::Kind::kGp, surrogate::Mode::kRegression},
      {surrogate::Kind::kMlp, surrogate::Mode::kRanking},
      {surrogate::Kind::kBnn, surrogate::Mode::kRanking}};
  for (const auto& [kind, mode] : trained) {
    bayesopt::CampaignConfig t = c;
    t.surrogate.kind = kind;
    t.surrogate.mode = mode;
    const auto trace = bayesopt::run_campaign(ds, t);
    const double auc = trace.valid() ? analytics::bo_auc(trace) : 1e9;
    ok = ok && auc <= oracle_auc + 0.02;
    detail += fmt("; %s-%s %.4f", surrogate::to_string(kind).c_str(), surrogate::to_string(mode).c_str(), auc);
  }
  return {ok, detail + " (each <= truth + 0.02)"};
}

// Ranking vs regression BNN on rough landscapes. The ranking loss uses
// margin 1: with margin 0 a constant network is a global minimiser of the
// pairwise hinge and the BNN collapses to it.
constexpr double kRankingMargin = 1.0;

Outcome ranking_vs_regression() {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t gseed : {1, 2, 3}) {
    data::SyntheticParams p;
    p.n = 1000;
    p.cliff_count = 100;
    p.seed = gseed;
    const auto ds = data::generate_synthetic(p);
    std::vector<double> auc[2];
    for (int ranking = 0; ranking < 2; ++ranking) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        bayesopt::CampaignConfig c;
        c.surrogate.kind = surrogate::Kind::kBnn;
        c.surrogate.mode = ranking ? surrogate::Mode::kRanking : surrogate::Mode::kRegression;
        if (ranking) c.surrogate.train.margin = kRankingMargin;
        c.seed = seed;
        const auto trace = bayesopt::run_campaign(ds, c);
        auc[ranking].push_back(trace.valid() ? analytics::bo_auc(trace) : 0.0);
      }
    }
    const auto t = analytics::t_test(auc[1], auc[0]);
    const bool win = mean_of(auc[1]) > mean_of(auc[0]) && t.p < 0.05;
    wins += win;
    detail += fmt("%sgen %llu: ranking %.4f vs regression %.4f, p %.3g", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(gseed), mean_of(auc[1]), mean_of(auc[0]), t.p);
  }
  return {wins >= 2, fmt("ranking margin %.0f; ", kRankingMargin) + detail + fmt("; %zu of 3 significant wins", wins)};
}

// Shared by the roughness trend and the tau correlation.
struct Sweep {
  std::vector<std::size_t> cliffs;
  std::vector<double> rogi;
  std::vector<double> mean_auc;
  std::vector<CampaignTrace> traces;
};

const Sweep& gp_sweep() {
  static const Sweep sweep = [] {
    Sweep s;
    s.cliffs = {0, 50, 100, 200, 300, 400, 500};
    for (std::size_t cliffs : s.cliffs) {
      data::SyntheticParams p;
      p.n = 1000;
      p.cliff_count = cliffs;
      p.seed = 7;
      const auto ds = data::generate_synthetic(p);
      std::vector<chem::Fingerprint> fps;
      std::vector<double> y;
      for (const auto& r : ds.records()) {
        fps.push_back(r.features);
        y.push_back(r.raw_target);
      }
      s.rogi.push_back(analytics::rogi(fps, y).rogi);
      std::vector<double> auc;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        bayesopt::CampaignConfig c;
        c.surrogate.kind = surrogate::Kind::kGp;
        c.seed = seed;
        auto trace = bayesopt::run_campaign(ds, c);
        if (trace.valid()) auc.push_back(analytics::bo_auc(trace));
        s.traces.push_back(std::move(trace));
      }
      s.mean_auc.push_back(auc.empty() ? 0.0 : mean_of(auc));
    }
    return s;
  }();
  return sweep;
}

Outcome roughness_trend() {
  const Sweep& s = gp_sweep();
  std::vector<std::size_t> order(s.rogi.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.rogi[a] < s.rogi[b]; });
  std::size_t good = 0;
  std::string detail;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    detail += fmt("%sc%zu rogi %.3f auc %.4f", k ? ", " : "", s.cliffs[i], s.rogi[i], s.mean_auc[i]);
    if (k > 0) good += s.mean_auc[i] <= s.mean_auc[order[k - 1]];
  }
  const std::size_t pairs = order.size() - 1;
  return {good >= 5, fmt("%zu of %zu consecutive pairs non-increasing (need 5); ", good, pairs) + detail};
}

Outcome tau_correlation() {
  const Sweep& s = gp_sweep();
  std::vector<double> tau, frac;
  for (const auto& t : s.traces) {
    if (!t.valid()) continue;
    tau.push_back(t.rounds.back().test_tau);
    frac.push_back(t.evaluations.back().frac_top_k);
  }
  const auto c = analytics::pearson_r(tau, frac);
  return {c.r > 0.0 && c.p < 0.05, fmt("%zu traces, r %.3f, p %.3g (need r > 0, p < 0.05)", tau.size(), c.r, c.p)};
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "rbo_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "grid.cfg") << "synthetic_n = 400\nsynthetic_cliffs = 20\n"
                                      "kinds = mlp, bnn\nmodes = ranking, regression\n"
                                      "acquisitions = ucb, ei\nn_seeds = 2\n";
  const auto run = [&](const std::string& name, int jobs) {
    const std::string cmd = std::string(RBO_CLI_PATH) + " run --jobs " + std::to_string(jobs) + " --out " +
                            (root / name).string() + " " + (root / "grid.cfg").string() + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  const bool ran = run("a", 1) && run("b", 1) && run("c", 8);
  if (!ran) return {false, "rbo run exited with an error"};
  const auto a = read_dir(root / "a"), b = read_dir(root / "b"), c = read_dir(root / "c");
  return {a.size() == 17 && a == b && a == c,
          fmt("%zu files per run; repeat identical: %s; jobs 1 vs 8 identical: %s", a.size(), a == b ? "yes" : "no",
              a == c ? "yes" : "no")};
}

// Five tight clusters of ten with smooth cluster-level targets; a cliff swaps
// the targets of a member of the lowest and a member of the highest cluster,
// which keeps the target distribution fixed.
Outcome rogi_properties() {
  Rng rng = make_rng(1010);
  std::vector<chem::Fingerprint> fps;
  std::vector<double> y;
  for (int k = 0; k < 5; ++k) {
    const auto centre = oracle::random_fingerprint(rng, 256, 0.2);
    for (int j = 0; j < 10; ++j) {
      auto fp = centre;
      for (int f = 0; f < 3; ++f) {
        const auto bit = uniform_index(rng, 256);
        if (fp.test(bit)) {
          fp.reset(bit);
        } else {
          fp.set(bit);
        }
      }
      fps.push_back(fp);
      y.push_back(k + 0.02 * j);
    }
  }
  const std::vector<double> flat(50, 2.5);
  const double constant = analytics::rogi(fps, flat).rogi;

  std::vector<double> affine;
  for (double v : y) affine.push_back(-3.7 * v + 12.0);
  const double base = analytics::rogi(fps, y).rogi;
  const double affine_gap = std::fabs(analytics::rogi(fps, affine).rogi - base);

  std::vector<double> rogis = {base};
  std::vector<double> cliffy = y;
  for (int j = 0; j < 3; ++j) {
    std::swap(cliffy[j], cliffy[40 + j]);
    rogis.push_back(analytics::rogi(fps, cliffy).rogi);
  }
  bool increasing = true;
  for (std::size_t i = 1; i < rogis.size(); ++i) increasing = increasing && rogis[i] > rogis[i - 1];
  return {constant == 0.0 && affine_gap <= 1e-12 && increasing,
          fmt("constant %.3g; affine gap %.3g <= 1e-12; rogi with 0..3 cliffs %.4f %.4f %.4f %.4f", constant,
              affine_gap, rogis[0], rogis[1], rogis[2], rogis[3])};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "metric oracles", 10, metric_oracles},
      {2, "gradient checks", 30, gradient_checks},
      {3, "gp equivalence", 10, gp_equivalence},
      {4, "fingerprint invariance", 10, fingerprint_invariance},
      {5, "oracle campaign bound", 300, oracle_campaign},
      {6, "ranking beats regression on rough data", 1800, ranking_vs_regression},
      {7, "roughness trend", 2700, roughness_trend},
      {8, "tau vs top-k correlation", 2700, tau_correlation},
      {9, "determinism", 600, determinism},
      {10, "rogi properties", 10, rogi_properties},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("[%s] %d %s: %s (%.1f s, limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.limit_s, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
