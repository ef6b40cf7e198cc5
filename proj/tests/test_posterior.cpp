#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "ewoc/numeric.hpp"
#include "ewoc/posterior.hpp"
#include "ewoc/serialization.hpp"
#include "oracle.hpp"

using namespace ewoc;
using ewoc::test::mp;

namespace {

ModelSpec r115777(std::vector<int> resolution = {}) {
  ModelSpec s;
  s.constants = test::r115777_constants();
  s.resolution = std::move(resolution);
  return s;
}

ModelSpec abr(std::vector<int> resolution = {41, 41, 41}) {
  ModelSpec s;
  s.constants = {0.2, 1.0, 100.0, std::nullopt, Link::logistic};
  s.prior.kind = PriorKind::uniform_cov3;
  s.covariates = {{"anti_sea", 0.0, 200.0, 200.0}};
  s.resolution = std::move(resolution);
  return s;
}

std::vector<Observation> sample_data() {
  return {{60, 0, {}, 1}, {222, 0, {}, 2}, {350, 1, {}, 3}, {280, 0, {}, 4}, {300, 1, {}, 5}};
}

}  // namespace

TEST_CASE("pairwise summation is order fixed and accurate") {
  std::vector<double> v(100000, 0.1);
  const mp exact = mp(0.1) * 100000;
  CHECK(test::rel_err(pairwise_sum(v.data(), v.size()), exact) < 1e-14);
  CHECK(pairwise_sum(v.data(), 0) == 0.0);
}

TEST_CASE("model spec validation reports every field") {
  ModelSpec s = r115777();
  s.constants.theta = 1.5;
  s.constants.x_max = 10;
  s.resolution = {5, 5};
  try {
    validate(s);
    FAIL("expected InvalidConfig");
  } catch (const InvalidConfig& e) {
    std::set<std::string> fields;
    for (const auto& f : e.errors()) fields.insert(f.field);
    CHECK(fields == std::set<std::string>{"constants.theta", "constants.x_max", "resolution"});
  }
  ModelSpec cov = abr();
  cov.covariates[0].reference = 0.0;
  CHECK_THROWS_AS(validate(cov), InvalidConfig);
}

TEST_CASE("uniform prior quantile gives the first recommendation") {
  const auto g = prior_grid(r115777());
  CHECK(g.support_size() == 201 * 201);
  CHECK(g.mass.sum() == doctest::Approx(1.0).epsilon(1e-12));
  // 60 + 0.3 * 540
  CHECK(quantile_mtd(g, 0.3) == doctest::Approx(222.0).epsilon(1e-9));
  CHECK(marginal_cdf_mtd(g, 222.0) == doctest::Approx(0.3).epsilon(1e-9));
  const auto s = summaries(g);
  CHECK(s.mean == doctest::Approx(330.0));
  CHECK(s.sd == doctest::Approx(540.0 / std::sqrt(12.0)).epsilon(1e-9));
  CHECK(s.median == doctest::Approx(330.0));
  CHECK(s.mode == doctest::Approx(330.0).epsilon(0.01));
}

TEST_CASE("grid posterior matches a brute-force extended-precision evaluation") {
  const auto spec = r115777({21, 25});
  const auto obs = sample_data();
  const auto g = build_posterior(spec, obs);

  const auto cm = test::to_mp(spec.constants);
  std::vector<mp> w;
  mp total = 0;
  for (int i = 0; i < 21; ++i) {
    for (int j = 0; j < 25; ++j) {
      const BasicTwoParamState<mp> s{mp(g.axes[0].midpoint(i)), mp(g.axes[1].midpoint(j))};
      const auto p = natural_params(s, cm);
      mp lik = 1;
      for (const auto& o : obs) {
        const mp pr = 1 / (1 + exp(-(p.beta0 + p.beta1 * o.dose)));
        lik *= o.dlt ? pr : 1 - pr;
      }
      w.push_back(lik);
      total += lik;
    }
  }
  for (std::size_t k = 0; k < w.size(); ++k)
    CHECK(test::rel_err(g.mass[static_cast<Eigen::Index>(k)], w[k] / total) < 1e-10);
  CHECK(g.n_obs == 5);
}

TEST_CASE("posterior is deterministic and incremental updates equal a batch build") {
  const auto spec = r115777();
  const auto obs = sample_data();
  const auto a = build_posterior(spec, obs);
  const auto b = build_posterior(spec, obs);
  CHECK((a.log_weights == b.log_weights).all());
  auto c = prior_grid(spec);
  for (const auto& o : obs) absorb(c, o);
  CHECK((a.mass == c.mass).all());
}

TEST_CASE("quantile and cdf are inverse on the marginal") {
  const auto g = build_posterior(r115777(), sample_data());
  const auto m = mtd_marginal(g);
  for (double p : {0.01, 0.1, 0.25, 0.5, 0.9, 0.99}) CHECK(cdf(m, quantile(m, p)) == doctest::Approx(p).epsilon(1e-9));
  CHECK(quantile(m, 0.0) == m.lo());
  CHECK(quantile(m, 1.0) == doctest::Approx(m.hi()));
  CHECK(cdf(m, 0.0) == 0.0);
  CHECK(cdf(m, 1e6) == 1.0);
}

TEST_CASE("HPD intervals on synthetic marginals") {
  SUBCASE("uniform: any interval of the right mass is shortest; the centred one is reported") {
    const auto m = binned_marginal(Eigen::ArrayXd::LinSpaced(101, 0.0, 100.0), Eigen::ArrayXd::Ones(100));
    const auto h = hpd(m, 0.9);
    CHECK(h.length() == doctest::Approx(90.0));
  }
  SUBCASE("triangular density rising to the right hugs the upper end") {
    Eigen::ArrayXd edges = Eigen::ArrayXd::LinSpaced(1001, 0.0, 1.0);
    Eigen::ArrayXd mass = (edges.head(1000) + edges.tail(1000)) / 2.0;
    const auto m = binned_marginal(edges, mass);
    const auto h = hpd(m, 0.75);
    // F(t) = t^2, so [0.5, 1] holds 0.75
    CHECK(h.lo == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(h.hi == doctest::Approx(1.0));
  }
  SUBCASE("symmetric peaked density is centred") {
    Eigen::ArrayXd edges = Eigen::ArrayXd::LinSpaced(401, -2.0, 2.0);
    Eigen::ArrayXd mid = (edges.head(400) + edges.tail(400)) / 2.0;
    const auto m = binned_marginal(edges, (-mid.square()).exp());
    const auto h = hpd(m, 0.95);
    CHECK(h.lo == doctest::Approx(-h.hi).epsilon(1e-2));
    CHECK(summarize(m).median == doctest::Approx(0.0).scale(1.0));
  }
}

TEST_CASE("alpha-quantile minimizes expected asymmetric loss") {
  const auto g = build_posterior(r115777(), sample_data());
  const auto m = mtd_marginal(g);
  for (double alpha : {0.1, 0.25, 0.5}) {
    const double q = quantile(m, alpha);
    double best_x = m.lo(), best = expected_loss(m, m.lo(), alpha);
    for (Eigen::Index j = 0; j < m.edges.size(); ++j) {
      const double l = expected_loss(m, m.edges[j], alpha);
      if (l < best) {
        best = l;
        best_x = m.edges[j];
      }
    }
    CHECK(std::abs(best_x - q) <= g.axes[1].width() + 1e-9);
    CHECK(expected_loss(m, q, alpha) <= best + 1e-9);
  }
}

TEST_CASE("expected loss matches direct summation for point masses") {
  Eigen::ArrayXd v(3), w(3);
  v << 1.0, 2.0, 4.0;
  w << 0.2, 0.5, 0.3;
  const auto m = atom_marginal(v, w);
  // the first atom is a point, the others spread over [v_{j-1}, v_j]
  const double x = 2.5, a = 0.3;
  double num = 0.0;
  num += 0.2 * (1 - a) * (x - 1.0);
  const int k = 200000;
  for (int i = 0; i < k; ++i) {
    const double g1 = 1.0 + (i + 0.5) / k * 1.0;
    const double g2 = 2.0 + (i + 0.5) / k * 2.0;
    num += 0.5 / k * (g1 > x ? a * (g1 - x) : (1 - a) * (x - g1));
    num += 0.3 / k * (g2 > x ? a * (g2 - x) : (1 - a) * (x - g2));
  }
  CHECK(expected_loss(m, x, a) == doctest::Approx(num).epsilon(1e-6));
}

TEST_CASE("density samples integrate to one") {
  const auto g = build_posterior(r115777(), sample_data());
  for (const auto& m : {mtd_marginal(g), mtd_marginal(prior_grid(r115777()))}) {
    const auto pts = density_steps(m);
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
    CHECK(area == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("grid quantiles agree with the importance-sampling oracle") {
  const auto spec = r115777();
  const auto obs = sample_data();
  const auto g = build_posterior(spec, obs);
  const auto oracle = mc_oracle(spec, obs, 200000, 99);
  CHECK_FALSE(oracle.low_ess);
  for (double p : {0.1, 0.25, 0.5, 0.75}) CHECK(std::abs(quantile_mtd(g, p) - oracle.quantile(p)) < 0.01 * 540.0);
}

TEST_CASE("covariate grid excludes the rho2 >= rho1 cells") {
  const auto spec = abr();
  const auto g = prior_grid(spec);
  int strict = 0;
  for (int j = 0; j < 41; ++j)
    for (int k = 0; k < 41; ++k)
      if (g.axes[2].midpoint(k) < g.axes[1].midpoint(j)) ++strict;
  CHECK(g.support_size() == 41 * strict);
  CHECK(g.tensor_size() == 41 * 41 * 41);
  CHECK(((g.cloud->coords.col(2) < g.cloud->coords.col(1))).all());

  const json j = posterior_to_json(g);
  std::size_t nulls = 0;
  for (const auto& v : j["log_weights"]) nulls += v.is_null();
  CHECK(nulls == static_cast<std::size_t>(g.tensor_size() - g.support_size()));

  // at the reference covariate the conditional MTD is gamma_max, uniform a priori
  const std::vector<double> ref{200.0};
  CHECK(quantile_mtd(g, 0.5, ref) == doctest::Approx(50.5).epsilon(0.02));
  CHECK_THROWS_AS(quantile_mtd(g, 0.5), DomainError);
}

TEST_CASE("covariate posterior agrees with the Monte Carlo oracle") {
  const auto spec = abr({61, 61, 61});
  const std::vector<Observation> obs{{1, 0, {20}, 1}, {20, 0, {150}, 2}, {40, 1, {50}, 3}, {30, 0, {200}, 4}};
  const auto g = build_posterior(spec, obs);
  const auto oracle = mc_oracle(spec, obs, 200000, 5);
  for (double w : {0.0, 100.0, 200.0}) {
    const std::vector<double> wv{w};
    for (double p : {0.25, 0.5}) CHECK(std::abs(quantile_mtd(g, p, wv) - oracle.quantile(p, wv)) < 0.02 * 99.0);
  }
}

TEST_CASE("Monte Carlo prior support for two covariates") {
  ModelSpec spec = abr({});
  spec.prior.kind = PriorKind::uniform_cov4;
  spec.covariates.push_back({"cancer_type", 0.0, 1.0, 1.0});
  spec.mc_draws = 20000;
  const auto g = prior_grid(spec);
  CHECK(g.monte_carlo());
  CHECK(g.support_size() == 20000);
  const std::vector<double> ref{200.0, 1.0};
  // gamma_max ~ U[1, 100] a priori
  CHECK(quantile_mtd(g, 0.5, ref) == doctest::Approx(50.5).epsilon(0.03));
  const auto post = build_posterior(spec, std::vector<Observation>{{1, 0, {0, 0}, 1}, {50, 1, {200, 1}, 2}});
  CHECK(quantile_mtd(post, 0.5, ref) < 50.5);
}

TEST_CASE("one-parameter grid") {
  ModelSpec s;
  s.constants = {1.0 / 3.0, 0.0, 0.0, 0.05, Link::logistic};
  s.prior = {PriorKind::uniform_1p, 1.0, 4.0, 0.0, 1000.0};
  const auto [lo, hi] = dose_bounds(s);
  s.constants.x_min = lo;
  s.constants.x_max = hi;
  const auto g = prior_grid(s);
  CHECK(g.support_size() == 1001);
  const auto d = one_param_design(s);
  // beta ~ U[1, 4]: the MTD median is the MTD at beta = 2.5
  CHECK(quantile_mtd(g, 0.5) == doctest::Approx(mtd_one_param(2.5, d)).epsilon(1e-3));

  SUBCASE("degenerate prior range is a point mass") {
    ModelSpec p = s;
    p.prior.beta_hi = p.prior.beta_lo;
    const auto [plo, phi] = dose_bounds(p);
    p.constants.x_min = plo;
    p.constants.x_max = phi;
    const auto pg = build_posterior(p, std::vector<Observation>{{plo, 1, {}, 1}, {plo, 0, {}, 2}});
    CHECK(quantile_mtd(pg, 0.25) == doctest::Approx(mtd_one_param(1.0, d)));
  }
}

TEST_CASE("impossible data is reported") {
  ModelSpec s;
  s.constants = {1.0 / 3.0, 0.0, 0.0, 0.05, Link::logistic};
  s.prior = {PriorKind::uniform_1p, 1.0, 4.0, 0.0, 1000.0};
  const auto [lo, hi] = dose_bounds(s);
  s.constants.x_min = lo;
  s.constants.x_max = hi;
  auto g = prior_grid(s);
  // no toxicity is possible at x*
  CHECK_THROWS_AS(absorb(g, Observation{0.0, 1, {}, 1}), DegeneratePosterior);
}
