#include <doctest.h>

#include <cmath>

#include "ewoc/simulator.hpp"
#include "oracle.hpp"

using namespace ewoc;

namespace {

TrialConfig r115777(double alpha = 0.25, std::vector<int> resolution = {}) {
  TrialConfig c;
  c.model.constants = test::r115777_constants();
  c.model.resolution = std::move(resolution);
  c.alpha = {alpha, 0.0, alpha, 0};
  return c;
}

Scenario flat(double p) {
  return {"flat", "constant risk", TabulatedCurve{{60, 600}, {p, p}}, 330.0, {}};
}

}  // namespace

TEST_CASE("tabulated truth interpolates and is validated") {
  const TabulatedCurve c{{0, 10, 20}, {0.0, 0.5, 0.6}};
  CHECK(c(-5) == 0.0);
  CHECK(c(5) == doctest::Approx(0.25));
  CHECK(c(15) == doctest::Approx(0.55));
  CHECK(c(30) == 0.6);
  const auto cfg = r115777();
  CHECK_THROWS_AS(validate(Scenario{"x", "x", TabulatedCurve{{0, 10}, {0.5, 0.2}}, 5.0, {}}, cfg), InvalidParameter);
  CHECK_THROWS_AS(validate(Scenario{"x", "x", TabulatedCurve{{0, 10}, {0.5, 1.2}}, 5.0, {}}, cfg), InvalidParameter);
  const Scenario off{"x", "x", TabulatedCurve{{60, 600}, {0.0, 0.6}}, std::nullopt, {}};
  CHECK(true_mtd(off, cfg) == doctest::Approx(60 + 540.0 / 0.6 / 3.0));
}

TEST_CASE("on-model truths reach theta at their MTD") {
  const auto cfg = r115777();
  for (const auto& s : default_scenarios(cfg.model.constants)) {
    CHECK_NOTHROW(validate(s, cfg));
    CHECK(true_prob(s, cfg, true_mtd(s, cfg)) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  }
  CHECK(default_scenarios(cfg.model.constants).size() == 12);
}

TEST_CASE("no toxicity escalates monotonically") {
  const auto cfg = r115777(0.25, {81, 81});
  const auto r = run_replicate(flat(0.0), cfg, 15, 1);
  CHECK(std::count(r.dlts.begin(), r.dlts.end(), 1) == 0);
  for (std::size_t k = 1; k < r.doses.size(); ++k) CHECK(r.doses[k] >= r.doses[k - 1]);
  CHECK(r.doses.back() > 400.0);
}

TEST_CASE("certain toxicity halts at patient 1") {
  const auto r = run_replicate(flat(1.0), r115777(0.25, {81, 81}), 20, 1);
  CHECK(r.halted);
  CHECK(r.doses.size() == 1);
  CHECK_FALSE(r.estimate.has_value());
}

TEST_CASE("replicates are reproducible and keyed by replicate index") {
  const auto cfg = r115777(0.25, {81, 81});
  const Scenario s = default_scenarios(cfg.model.constants)[7];
  const auto a = run_replicate(s, cfg, 12, 42, 3);
  const auto b = run_replicate(s, cfg, 12, 42, 3);
  CHECK(a.doses == b.doses);
  CHECK(a.dlts == b.dlts);
  CHECK(a.posterior_sd == b.posterior_sd);
  const auto c = run_replicate(s, cfg, 12, 42, 4);
  CHECK((a.dlts != c.dlts || a.doses != c.doses));
}

TEST_CASE("operating characteristics aggregate replicates in order") {
  const auto cfg = r115777(0.25, {61, 61});
  const Scenario s = default_scenarios(cfg.model.constants)[4];
  const auto oc = operating_chars(s, cfg, 8, 2, 9);
  const auto r0 = run_replicate(s, cfg, 8, 9, 0);
  const auto r1 = run_replicate(s, cfg, 8, 9, 1);
  auto frac = [&](const ReplicateResult& r, bool overdose) {
    double k = 0;
    for (std::size_t i = 0; i < r.doses.size(); ++i) k += overdose ? (r.doses[i] > 200.0) : r.dlts[i];
    return k / static_cast<double>(r.doses.size());
  };
  CHECK(oc.dlt_fraction == doctest::Approx((frac(r0, false) + frac(r1, false)) / 2));
  CHECK(oc.overdose_fraction == doctest::Approx((frac(r0, true) + frac(r1, true)) / 2));
  if (r0.estimate && r1.estimate)
    CHECK(oc.bias == doctest::Approx((r0.estimate->point + r1.estimate->point) / 2 - 200.0));
  CHECK(oc.trace_quantiles.size() == 8);
  CHECK(oc.avg_sd.size() == 8);

  const auto again = operating_chars(s, cfg, 8, 2, 9);
  CHECK(oc_csv_row(again) == oc_csv_row(oc));
  CHECK_THROWS(operating_chars(s, cfg, 8, 1, 9));
}

TEST_CASE("MTD above the dose range means no overdoses") {
  const auto cfg = r115777(0.25, {61, 61});
  const Scenario safe{"safe", "safe", TabulatedCurve{{60, 600}, {0.0, 0.1}}, 900.0, {}};
  CHECK(operating_chars(safe, cfg, 10, 5, 1).overdose_fraction == 0.0);
}

TEST_CASE("CSV header lists per-patient columns") {
  const std::string h = oc_csv_header(2);
  CHECK(h == "scenario,label,alpha,n,dlt_fraction,overdose_fraction,mae,bias,avg_sd_1,avg_sd_2,hpd90_1,hpd90_2,"
             "hpd95_1,hpd95_2");
}

TEST_CASE("consistency check preconditions") {
  const auto cfg = load_config(test::fixture("one_param.json"));
  CHECK_THROWS_AS(consistency_check(1.0, cfg, {10}, 5, 1), InvalidParameter);
  CHECK_THROWS_AS(consistency_check(4.0, cfg, {10}, 5, 1), InvalidParameter);
  CHECK_THROWS_AS(consistency_check(2.0, r115777(), {10}, 5, 1), InvalidParameter);
  const auto rows = consistency_check(2.0, cfg, {10, 50}, 40, 1);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].median_abs_error < rows[0].median_abs_error);
}

TEST_CASE("point prior gives a constant recommendation") {
  auto cfg = load_config(test::fixture("one_param.json"));
  cfg.model.prior.beta_hi = cfg.model.prior.beta_lo;
  const auto [lo, hi] = dose_bounds(cfg.model);
  cfg.model.constants.x_min = lo;
  cfg.model.constants.x_max = hi;
  const auto rows = consistency_check(cfg.model.prior.beta_lo, cfg, {10, 25}, 5, 1);
  for (const auto& r : rows) CHECK(r.median_abs_error == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("sample-size table") {
  const auto cfg = r115777(0.25, {81, 81});
  const Scenario s = default_scenarios(cfg.model.constants)[7];
  const auto t = sample_size_table(cfg, s, {1, 2, 5, 10, 20}, 40, 3, 1000.0);
  CHECK(t.prior_sd == doctest::Approx(540.0 / std::sqrt(12.0)).epsilon(1e-9));
  // a non-DLT at x_min carries no information about the MTD; a DLT there does
  CHECK(t.rows[0].avg_sd <= t.prior_sd + 1e-9);
  CHECK(t.rows[1].avg_sd < t.prior_sd);
  CHECK(t.rows.back().avg_sd < t.rows[1].avg_sd);
  CHECK(t.rows.back().avg_hpd95 < t.rows[1].avg_hpd95);
  REQUIRE(t.smallest_n.has_value());
  CHECK(*t.smallest_n == 1);
  const auto never = sample_size_table(cfg, s, {1, 2}, 5, 3, 1.0);
  CHECK_FALSE(never.smallest_n.has_value());
  CHECK_THROWS(sample_size_table(cfg, s, {5, 2}, 5, 3));
}

TEST_CASE("covariate scenarios draw covariates within bounds") {
  auto cfg = load_config(test::fixture("abr217620.json"));
  cfg.model.resolution = {31, 31, 31};
  const auto scenarios = load_scenarios(test::fixture("scenarios_abr.json"));
  for (const auto& s : scenarios) {
    CHECK_NOTHROW(validate(s, cfg));
    const auto r = run_replicate(s, cfg, 6, 2);
    for (const auto& step : r.steps) {
      CHECK(step.covariates[0] >= 0.0);
      CHECK(step.covariates[0] <= 200.0);
    }
    CHECK(scenario_from_json(scenario_to_json(s)).id == s.id);
  }
}
