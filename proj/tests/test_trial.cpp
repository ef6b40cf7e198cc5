#include <doctest.h>

#include <random>

#include "ewoc/serialization.hpp"
#include "ewoc/trial.hpp"
#include "oracle.hpp"

using namespace ewoc;

namespace {

TrialConfig r115777(double alpha = 0.3) {
  TrialConfig c;
  c.name = "r115777";
  c.model.constants = test::r115777_constants();
  c.alpha = {alpha, 0.0, alpha, 0};
  return c;
}

TrialConfig abr_schedule() {
  TrialConfig c = r115777();
  c.alpha = {0.25, 0.05, 0.5, 9};
  return c;
}

}  // namespace

TEST_CASE("alpha schedule") {
  const auto s = abr_schedule().alpha;
  CHECK(alpha_at(s, 0) == 0.25);
  CHECK(alpha_at(s, 9) == 0.25);
  CHECK(alpha_at(s, 10) == doctest::Approx(0.30));
  CHECK(alpha_at(s, 14) == doctest::Approx(0.5));
  CHECK(alpha_at(s, 40) == 0.5);
  const AlphaSchedule fixed{0.25, 0.0, 0.25, 0};
  for (int k = 0; k < 50; ++k) CHECK(alpha_at(fixed, k) == 0.25);
}

TEST_CASE("first dose is the minimum dose") {
  CHECK(start_trial(r115777()).state.patients.front().dose == 60.0);
  const auto abr = load_config(test::fixture("abr217620.json"));
  CHECK(start_trial(abr, {150.0}).state.patients.front().dose == 1.0);
  TrialConfig levels = r115777();
  levels.dose_levels = {60, 120, 240, 480};
  CHECK(start_trial(levels).state.patients.front().dose == 60.0);
  CHECK_THROWS_AS(start_trial(abr), DomainError);
  CHECK_THROWS_AS(start_trial(abr, {250.0}), DomainError);
}

TEST_CASE("config validation lists fields") {
  TrialConfig c = r115777();
  c.alpha.start = 0.0;
  c.model.constants.theta = 0.7;
  c.model.constants.epsilon = 0.5;
  c.dose_levels = {100, 50};
  try {
    validate(c);
    FAIL("expected InvalidConfig");
  } catch (const InvalidConfig& e) {
    CHECK(e.errors().size() >= 2);
  }
}

TEST_CASE("outcomes, halting and conflicts") {
  auto s = start_trial(r115777()).state;
  CHECK(s.version == 1);

  SUBCASE("first-patient DLT halts by default") {
    const auto t = record_outcome(s, 1, 1);
    CHECK(t.state.halted);
    CHECK(t.state.halt_reason == kFirstPatientDlt);
    CHECK(t.state.version == 2);
    PosteriorCache cache;
    CHECK_THROWS_AS(recommend_continuous(t.state, {}, cache), TrialHalted);
    CHECK_THROWS_AS(final_mtd(t.state, cache), TrialHalted);
  }
  SUBCASE("halting can be switched off") {
    TrialConfig c = r115777();
    c.halt_on_first_dlt = false;
    const auto t = record_outcome(start_trial(c).state, 1, 1);
    CHECK_FALSE(t.state.halted);
  }
  SUBCASE("no DLT keeps the trial going") {
    const auto t = record_outcome(s, 1, 0);
    CHECK(t.state.active());
    CHECK(t.state.resolved_count == 1);
  }
  SUBCASE("double resolution conflicts") {
    const auto t = record_outcome(s, 1, 0);
    CHECK_THROWS_AS(record_outcome(t.state, 1, 1), ConflictError);
    CHECK_THROWS_AS(record_outcome(t.state, 7, 1), ConflictError);
  }
  SUBCASE("enrollment waits for patient 1") {
    PosteriorCache cache;
    CHECK_THROWS_AS(enroll_patient(s, {}, cache), ConflictError);
  }
}

TEST_CASE("prior-only recommendation and coherence of the first steps") {
  auto s = record_outcome(start_trial(r115777()).state, 1, 0).state;
  PosteriorCache cache;
  // one non-DLT at x_min leaves the MTD marginal unchanged
  const double x2 = recommend_continuous(s, {}, cache);
  CHECK(x2 == doctest::Approx(222.0).epsilon(1e-6));
  const auto t = enroll_patient(s, {}, cache);
  CHECK(t.state.patients.back().dose == doctest::Approx(x2));
  const auto s3 = record_outcome(t.state, 2, 1).state;
  const double x3 = recommend_continuous(s3, {}, cache);
  CHECK(x3 <= x2);

  const auto s3b = record_outcome(t.state, 2, 0).state;
  CHECK(recommend_continuous(s3b, {}, cache) >= x2);
}

TEST_CASE("pending patients do not change the recommendation") {
  PosteriorCache cache;
  auto s = record_outcome(start_trial(r115777()).state, 1, 0).state;
  s = enroll_patient(s, {}, cache).state;
  s = record_outcome(s, 2, 0).state;
  const double before = recommend_continuous(s, {}, cache);
  const auto with_pending = enroll_patient(s, {}, cache).state;
  CHECK(recommend_continuous(with_pending, {}, cache) == before);
  PosteriorCache fresh;
  CHECK(recommend_continuous(with_pending, {}, fresh) == before);
}

TEST_CASE("discrete dose snapping") {
  TrialConfig c = r115777();
  c.model.constants.x_min = 100;
  c.model.constants.x_max = 300;
  c.dose_levels = {100, 200, 300};
  c.tolerances = {0.0, 1.0};
  const auto g = prior_grid(c.model);
  const auto m = mtd_marginal(g);
  CHECK(snap_discrete(250, c, m, 0.3).dose == 200);
  CHECK(snap_discrete(305, c, m, 0.3).dose == 300);
  const auto low = snap_discrete(50, c, m, 0.3);
  CHECK(low.dose == 100);
  CHECK(low.advisory);

  // with T2 = 0 a level is only allowed while its overdose probability stays within alpha
  c.tolerances = {1000.0, 0.0};
  const auto strict = snap_discrete(300, c, m, 0.3);
  CHECK(cdf(m, strict.dose) <= 0.3 + 1e-12);
}

TEST_CASE("final estimate is the alpha-quantile") {
  PosteriorCache cache;
  auto s = record_outcome(start_trial(r115777(0.5)).state, 1, 0).state;
  for (int k = 2; k <= 6; ++k) {
    s = enroll_patient(s, {}, cache).state;
    s = record_outcome(s, k, k % 3 == 0 ? 1 : 0).state;
  }
  const auto est = final_mtd(s, cache);
  const auto m = mtd_marginal(cache.posterior(s));
  CHECK(est.point == doctest::Approx(summarize(m).median));
  CHECK(est.alpha_used == 0.5);
  CHECK(est.point >= est.hpd95.lo);
  CHECK(est.point <= est.hpd95.hi);
  CHECK(est.loss_risk == doctest::Approx(expected_loss(m, est.point, 0.5)));
  const auto q25 = final_mtd(s, cache, 0.25);
  CHECK(q25.point == doctest::Approx(quantile(m, 0.25)));
}

TEST_CASE("replay reproduces state and versions step by one") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    PosteriorCache cache;
    std::vector<TrialEvent> log;
    auto t = start_trial(r115777());
    log.push_back(t.event);
    TrialState s = t.state;
    for (int k = 1; k < 8 && s.active(); ++k) {
      const std::uint64_t v = s.version;
      t = record_outcome(s, k, static_cast<int>(gen() % 2));
      CHECK(t.state.version == v + 1);
      log.push_back(t.event);
      s = t.state;
      if (!s.active()) break;
      t = enroll_patient(s, {}, cache);
      log.push_back(t.event);
      s = t.state;
    }
    CHECK(replay(s.config, log) == s);
    // JSON round trip of the log
    std::vector<TrialEvent> parsed;
    for (const auto& e : log) parsed.push_back(event_from_json(json::parse(event_to_json(e).dump())));
    CHECK(replay(s.config, parsed) == s);
  }
}

TEST_CASE("config JSON round trip") {
  for (const char* name : {"r115777.json", "abr217620.json", "abr217620_cancer_type.json", "one_param.json",
                           "r115777_levels.json"}) {
    const auto c = load_config(test::fixture(name));
    CHECK(config_from_json(config_to_json(c)) == c);
  }
  const auto bad = json::parse(R"({"constants": {"theta": 0.7, "epsilon": 0.5, "x_min": 1, "x_max": "ten"}})");
  try {
    config_from_json(bad);
    FAIL("expected InvalidConfig");
  } catch (const InvalidConfig& e) {
    CHECK(e.errors().front().field == "constants.x_max");
  }
}

TEST_CASE("covariate recommendations depend on the covariate") {
  const auto c = load_config(test::fixture("abr217620.json"));
  TrialConfig small = c;
  small.model.resolution = {41, 41, 41};
  PosteriorCache cache;
  auto s = record_outcome(start_trial(small, {100.0}).state, 1, 0).state;
  const double lo = recommend_continuous(s, std::vector<double>{0.0}, cache);
  const double hi = recommend_continuous(s, std::vector<double>{200.0}, cache);
  CHECK(lo >= 1.0);
  CHECK(hi <= 100.0);
  CHECK_THROWS_AS(recommend_continuous(s, std::vector<double>{250.0}, cache), DomainError);
  CHECK_THROWS_AS(recommend_continuous(s, {}, cache), DomainError);
}
