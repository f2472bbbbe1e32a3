#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracle_surrogate.hpp"
#include "rbo/analytics.hpp"
#include "rbo/bayesopt.hpp"
#include "rbo/error.hpp"
#include "rbo/stats.hpp"

using namespace rbo;
using namespace rbo::bayesopt;

namespace {

data::Dataset small_dataset(std::size_t n, std::uint64_t seed, std::size_t cliffs = 0) {
  data::SyntheticParams p;
  p.n = n;
  p.seed = seed;
  p.cliff_count = cliffs;
  return data::generate_synthetic(p);
}

CampaignConfig quick_config(surrogate::Kind kind, surrogate::Mode mode) {
  CampaignConfig c;
  c.surrogate.kind = kind;
  c.surrogate.mode = mode;
  c.surrogate.hidden = {16};
  c.surrogate.train.max_epochs = 10;
  c.surrogate.mc_samples = 8;
  c.surrogate.gp.steps = 20;
  c.n_init = 5;
  c.budget = 10;
  c.batch_size = 5;
  c.top_k = 10;
  return c;
}

}  // namespace

TEST_SUITE("bayesopt") {
  TEST_CASE("acquisition functions") {
    CHECK(ucb(1.0, 2.0, 0.3) == doctest::Approx(1.6));
    CHECK(greedy(-4.0) == -4.0);
    CHECK(ei(2.0, 0.0, 1.0) == 1.0);
    CHECK(ei(0.0, 0.0, 1.0) == 0.0);
    // Zero gap: EI reduces to std * phi(0).
    CHECK(ei(1.0, 2.0, 1.0) == doctest::Approx(2.0 * stats::normal_pdf(0.0)));
    CHECK(ei(5.0, 1.0, 0.0) > ei(4.0, 1.0, 0.0));
    CHECK(ei(0.0, 2.0, 1.0) > ei(0.0, 1.0, 1.0));
  }

  TEST_CASE("batch selection takes the best scores, ties to the lower index") {
    const std::vector<double> scores = {0.1, 0.9, 0.5, 0.9, 0.2};
    CHECK(select_batch(scores, 3) == std::vector<std::size_t>{1, 3, 2});
    CHECK(select_batch(scores, 5).size() == 5);
  }

  TEST_CASE("configuration checks") {
    CampaignConfig c;
    c.budget = 12;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.n_init = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.surrogate.kind = surrogate::Kind::kGp;
    c.surrogate.mode = surrogate::Mode::kRanking;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    CHECK_THROWS_AS(c.validate_for(100), ConfigError);
    CHECK_NOTHROW(c.validate_for(200));
    CHECK_THROWS_AS(acquisition_from_string("pi"), ConfigError);
    const CampaignConfig back = CampaignConfig::from_json(quick_config(surrogate::Kind::kBnn, surrogate::Mode::kRanking).to_json());
    CHECK(back.to_json() == quick_config(surrogate::Kind::kBnn, surrogate::Mode::kRanking).to_json());
  }

  TEST_CASE("truth surrogate with greedy acquisition finds the top candidates in order") {
    const auto ds = small_dataset(400, 3);
    CampaignConfig c;
    c.acquisition = Acquisition::kGreedy;
    c.top_k = 50;
    Rng rng = make_rng(c.seed);
    const auto trace = run_campaign(ds, c, rng, oracle::truth_factory());
    REQUIRE(trace.valid());
    REQUIRE(trace.evaluations.size() == 110);

    // Same split and ranking as the campaign.
    Rng replay = make_rng(c.seed);
    const auto split = data::split(ds.size(), c.test_fraction, replay());
    const auto ranked = rank_pool(ds, split.pool);
    std::set<std::size_t> found;
    for (std::size_t e = 0; e < c.n_init; ++e) found.insert(trace.evaluations[e].id);
    std::size_t next = 0;
    for (std::size_t e = c.n_init; e < trace.evaluations.size(); ++e) {
      while (found.count(ranked[next])) ++next;
      CHECK(trace.evaluations[e].id == ranked[next]);
      found.insert(ranked[next]);
    }
    const auto last_hit = std::find_if(trace.evaluations.begin(), trace.evaluations.end(),
                                       [](const EvaluationRecord& r) { return r.frac_top_k == 1.0; });
    REQUIRE(last_hit != trace.evaluations.end());
    CHECK(last_hit->eval_index <= c.n_init + c.top_k);
  }

  TEST_CASE("campaign invariants hold for every surrogate") {
    const auto ds = small_dataset(120, 5, 10);
    for (auto kind : {surrogate::Kind::kMlp, surrogate::Kind::kBnn, surrogate::Kind::kGp}) {
      for (auto mode : {surrogate::Mode::kRegression, surrogate::Mode::kRanking}) {
        if (kind == surrogate::Kind::kGp && mode == surrogate::Mode::kRanking) continue;
        for (auto acq : {Acquisition::kUcb, Acquisition::kEi, Acquisition::kGreedy}) {
          CampaignConfig c = quick_config(kind, mode);
          c.acquisition = acq;
          c.seed = 11;
          const auto trace = run_campaign(ds, c);
          INFO(to_json(trace).dump());
          REQUIRE(trace.valid());
          CHECK(trace.evaluations.size() == c.n_init + c.budget);
          CHECK(trace.rounds.size() == c.budget / c.batch_size);
          std::set<std::size_t> ids;
          for (const auto& e : trace.evaluations) ids.insert(e.id);
          CHECK(ids.size() == trace.evaluations.size());

          Rng replay = make_rng(c.seed);
          const auto split = data::split(ds.size(), c.test_fraction, replay());
          for (std::size_t t : split.test) CHECK(ids.count(t) == 0);

          for (std::size_t e = 1; e < trace.evaluations.size(); ++e) {
            CHECK(trace.evaluations[e].frac_top_k >= trace.evaluations[e - 1].frac_top_k);
          }
          for (const auto& r : trace.rounds) CHECK(std::fabs(r.test_tau) <= 1.0);
          CHECK(dump_trace(trace) == dump_trace(run_campaign(ds, c)));
          CHECK(dump_trace(trace_from_json(to_json(trace))) == dump_trace(trace));
        }
      }
    }
  }

  TEST_CASE("minimisation flips the objective") {
    const auto base = small_dataset(300, 8);
    std::vector<data::Record> recs(base.records().begin(), base.records().end());
    const data::Dataset ds("flipped", data::Direction::kMinimize, recs);
    CampaignConfig c;
    c.acquisition = Acquisition::kGreedy;
    c.top_k = 20;
    Rng rng = make_rng(0);
    const auto trace = run_campaign(ds, c, rng, oracle::truth_factory());
    // Greedy truth picks the smallest raw targets first.
    std::vector<double> raw;
    for (std::size_t e = c.n_init; e < trace.evaluations.size(); ++e) raw.push_back(trace.evaluations[e].raw_target);
    CHECK(std::is_sorted(raw.begin(), raw.end()));
    CHECK(analytics::bo_auc(trace) > 0.5);
  }

  TEST_CASE("surrogate failures become failed traces") {
    const auto ds = small_dataset(200, 1);
    CampaignConfig c;
    Rng rng = make_rng(0);
    const SurrogateFactory broken = [](const data::Dataset&, std::span<const std::size_t>,
                                       Rng&) -> std::unique_ptr<surrogate::Surrogate> {
      throw NumericalError("boom");
    };
    const auto trace = run_campaign(ds, c, rng, broken);
    CHECK_FALSE(trace.valid());
    CHECK(trace.error.find("boom") != std::string::npos);
    CHECK(trace.evaluations.size() == c.n_init);
  }

  TEST_CASE("surrogate predictions respect the direction") {
    const auto base = small_dataset(200, 2);
    std::vector<std::size_t> ids(60);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    const auto fps = base.features(ids);
    const auto raw = base.raw_targets(ids);
    surrogate::SurrogateConfig cfg;
    cfg.kind = surrogate::Kind::kGp;
    Rng rng = make_rng(1);
    const auto up = surrogate::fit_surrogate(cfg, fps, raw, data::Direction::kMaximize, rng);
    const auto down = surrogate::fit_surrogate(cfg, fps, raw, data::Direction::kMinimize, rng);
    const auto eu = surrogate::evaluate_surrogate(*up, fps, raw, data::Direction::kMaximize, rng);
    const auto ed = surrogate::evaluate_surrogate(*down, fps, raw, data::Direction::kMinimize, rng);
    CHECK(eu.kendall_tau > 0.5);
    CHECK(ed.kendall_tau == doctest::Approx(eu.kendall_tau).epsilon(1e-6));
  }
}
