#include "ewoc/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ewoc/numeric.hpp"

namespace ewoc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t parameter_count(PriorKind kind) {
  switch (kind) {
    case PriorKind::uniform_2p: return 2;
    case PriorKind::uniform_cov3: return 3;
    case PriorKind::uniform_cov4: return 4;
    case PriorKind::uniform_1p: return 1;
  }
  return 0;
}

std::size_t required_covariates(PriorKind kind) {
  switch (kind) {
    case PriorKind::uniform_cov3: return 1;
    case PriorKind::uniform_cov4: return 2;
    default: return 0;
  }
}

bool is_covariate_kind(PriorKind kind) {
  return kind == PriorKind::uniform_cov3 || kind == PriorKind::uniform_cov4;
}

GroupCoding scaled_group(const CovariateSpec& z) {
  const double alternate = z.reference == z.hi ? z.lo : z.hi;
  return {z.scale(z.reference), z.scale(alternate)};
}

Eigen::VectorXd scaled_covariates(const ModelSpec& spec, std::span<const double> w) {
  if (w.size() != spec.covariate_count())
    throw DomainError("expected " + std::to_string(spec.covariate_count()) + " covariate value(s), got " +
                      std::to_string(w.size()));
  Eigen::VectorXd out(static_cast<Eigen::Index>(w.size()));
  for (std::size_t k = 0; k < w.size(); ++k) out[static_cast<Eigen::Index>(k)] = spec.covariates[k].scale(w[k]);
  return out;
}

/// Dose on the scale the linear predictor acts on.
double dose_feature(const ModelSpec& spec, const OneParamDesign* design, double dose) {
  if (spec.prior.kind != PriorKind::uniform_1p) return dose;
  if (dose == design->x_star) return kNegInf;
  return log_standardized_dose(dose, *design);
}

}  // namespace

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::uniform_2p: return "uniform_2p";
    case PriorKind::uniform_cov3: return "uniform_cov3";
    case PriorKind::uniform_cov4: return "uniform_cov4";
    case PriorKind::uniform_1p: return "uniform_1p";
  }
  return "unknown";
}

PriorKind prior_kind_from_string(const std::string& name) {
  if (name == "uniform_2p") return PriorKind::uniform_2p;
  if (name == "uniform_cov3") return PriorKind::uniform_cov3;
  if (name == "uniform_cov4") return PriorKind::uniform_cov4;
  if (name == "uniform_1p") return PriorKind::uniform_1p;
  throw std::invalid_argument("unknown prior kind '" + name + "'");
}

void validate(const ModelSpec& spec, const std::string& prefix) {
  std::vector<FieldError> errors;
  auto fail = [&](const std::string& field, const std::string& msg) { errors.push_back({prefix + field, msg}); };
  const auto& c = spec.constants;
  const PriorKind kind = spec.prior.kind;

  if (!(c.theta > 0 && c.theta < 1)) fail("constants.theta", "must lie in (0, 1)");
  if (kind != PriorKind::uniform_1p && !(c.x_min < c.x_max)) fail("constants.x_max", "must exceed x_min");
  if (c.epsilon) {
    if (!(*c.epsilon > 0 && *c.epsilon < 1))
      fail("constants.epsilon", "must lie in (0, 1)");
    else if (!(c.theta < 1 - *c.epsilon))
      fail("constants.theta", "must be below 1 - epsilon");
  }

  if (kind == PriorKind::uniform_1p) {
    const auto& p = spec.prior;
    if (!c.epsilon) fail("constants.epsilon", "required by the one-parameter model");
    if (!(p.beta_lo > 0)) fail("prior.beta_lo", "must be positive");
    if (!(p.beta_lo <= p.beta_hi)) fail("prior.beta_hi", "must be at least beta_lo");
    if (!(p.x_star < p.x_star2)) fail("prior.x_star2", "must exceed x_star");
    if (errors.empty()) {
      const auto [lo, hi] = dose_bounds(spec);
      const double tol = 1e-9 * std::max(1.0, std::abs(p.x_star2 - p.x_star));
      if (std::abs(c.x_min - lo) > tol) fail("constants.x_min", "must equal the MTD at beta_lo");
      if (std::abs(c.x_max - hi) > tol) fail("constants.x_max", "must equal the MTD at beta_hi");
    }
  }

  const std::size_t need = required_covariates(kind);
  if (spec.covariates.size() != need) {
    fail("covariates", "prior " + to_string(kind) + " needs " + std::to_string(need) + " covariate(s)");
  } else {
    for (std::size_t k = 0; k < need; ++k) {
      const auto& cov = spec.covariates[k];
      const std::string field = "covariates[" + std::to_string(k) + "]";
      if (!(cov.lo < cov.hi)) fail(field + ".hi", "must exceed lo");
      if (k == 0 && cov.reference != cov.hi) fail(field + ".reference", "must equal the upper bound c2");
      if (k == 1 && cov.reference != cov.lo && cov.reference != cov.hi)
        fail(field + ".reference", "must be one of the two group values");
    }
  }

  if (!spec.resolution.empty()) {
    if (kind == PriorKind::uniform_cov4) {
      fail("resolution", "the Monte Carlo prior uses mc_draws, not a grid resolution");
    } else if (spec.resolution.size() != parameter_count(kind)) {
      fail("resolution", "needs " + std::to_string(parameter_count(kind)) + " entries");
    } else {
      for (int r : spec.resolution)
        if (r < 21) fail("resolution", "every axis needs at least 21 cells");
    }
  }
  if (kind == PriorKind::uniform_cov4 && spec.mc_draws < 10000) fail("mc_draws", "must be at least 10000");

  if (!errors.empty()) throw InvalidConfig(std::move(errors));
}

std::vector<int> effective_resolution(const ModelSpec& spec) {
  if (!spec.resolution.empty()) return spec.resolution;
  switch (spec.prior.kind) {
    case PriorKind::uniform_2p: return {201, 201};
    case PriorKind::uniform_cov3: return {101, 101, 101};
    case PriorKind::uniform_1p: return {1001};
    case PriorKind::uniform_cov4: return {};
  }
  return {};
}

OneParamDesign one_param_design(const ModelSpec& spec) {
  const auto& p = spec.prior;
  return make_one_param_design(spec.constants, p.beta_lo, p.beta_hi, p.x_star, p.x_star2);
}

std::pair<double, double> dose_bounds(const ModelSpec& spec) {
  if (spec.prior.kind != PriorKind::uniform_1p) return {spec.constants.x_min, spec.constants.x_max};
  const auto d = one_param_design(spec);
  return {mtd_one_param(d.beta_lo, d), mtd_one_param(d.beta_hi, d)};
}

NaturalParams covariate_point(const ModelSpec& spec, const CovariateState& cs) {
  CovariateState scaled = cs;
  scaled.c1 = 0.0;
  scaled.c2 = 1.0;
  std::optional<GroupCoding> group;
  if (spec.covariates.size() == 2) group = scaled_group(spec.covariates[1]);
  return covariate_natural_params(scaled, spec.constants, group);
}

std::int64_t PosteriorGrid::tensor_size() const {
  if (axes.empty()) return static_cast<std::int64_t>(cloud ? cloud->cell.size() : 0);
  std::int64_t n = 1;
  for (const auto& a : axes) n *= a.count;
  return n;
}

// ---------------------------------------------------------------------------
// Likelihood

double likelihood_log(std::span<const Observation> obs, const NaturalParams& params, const ModelSpec& spec) {
  std::optional<OneParamDesign> design;
  if (spec.prior.kind == PriorKind::uniform_1p) design = one_param_design(spec);
  double total = 0.0;
  for (const auto& o : obs) {
    const Eigen::VectorXd w = scaled_covariates(spec, o.covariates);
    const double f = dose_feature(spec, design ? &*design : nullptr, o.dose);
    double lp = params.beta0 + params.beta1 * f;
    if (w.size() != params.eta.size()) throw DomainError("likelihood_log: covariate dimension mismatch");
    for (Eigen::Index k = 0; k < w.size(); ++k) lp += params.eta[k] * w[k];
    total += o.dlt ? log_link_cdf(lp) : log_link_ccdf(lp);
  }
  return total;
}

double likelihood_log(std::span<const Observation> obs, const TwoParamState& state, const ModelSpec& spec) {
  return likelihood_log(obs, natural_params(state, spec.constants), spec);
}

// ---------------------------------------------------------------------------
// Grid construction

namespace {

std::shared_ptr<ParameterCloud> two_param_cloud(const ModelSpec& spec, std::vector<GridAxis>& axes) {
  const auto res = effective_resolution(spec);
  const auto& c = spec.constants;
  axes = {{"rho0", 0.0, c.theta, res[0]}, {"gamma", c.x_min, c.x_max, res[1]}};
  const Eigen::Index n = static_cast<Eigen::Index>(res[0]) * res[1];
  auto cloud = std::make_shared<ParameterCloud>();
  cloud->intercept.resize(n);
  cloud->slope.resize(n);
  cloud->effects.resize(n, 0);
  cloud->coords.resize(n, 2);
  cloud->cell.resize(n);
  cloud->mtd_bin.resize(n);
  Eigen::Index k = 0;
  for (int i = 0; i < res[0]; ++i) {
    for (int j = 0; j < res[1]; ++j, ++k) {
      const TwoParamState s{axes[0].midpoint(i), axes[1].midpoint(j)};
      const auto p = natural_params(s, c);
      cloud->intercept[k] = p.beta0;
      cloud->slope[k] = p.beta1;
      cloud->coords(k, 0) = s.rho0;
      cloud->coords(k, 1) = s.gamma;
      cloud->cell[k] = k;
      cloud->mtd_bin[k] = j;
    }
  }
  return cloud;
}

std::shared_ptr<ParameterCloud> one_param_cloud(const ModelSpec& spec, std::vector<GridAxis>& axes) {
  const auto res = effective_resolution(spec);
  const auto d = one_param_design(spec);
  axes = {{"beta", d.beta_lo, d.beta_hi, res[0]}};
  const Eigen::Index n = res[0];
  auto cloud = std::make_shared<ParameterCloud>();
  cloud->intercept = Eigen::ArrayXd::Constant(n, d.upper_logit);
  cloud->slope.resize(n);
  cloud->effects.resize(n, 0);
  cloud->coords.resize(n, 1);
  cloud->cell.resize(n);
  cloud->mtd_bin.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double beta = axes[0].midpoint(static_cast<int>(i));
    cloud->slope[i] = beta;
    cloud->coords(i, 0) = beta;
    cloud->cell[i] = i;
    cloud->mtd_bin[i] = static_cast<int>(i);
  }
  return cloud;
}

void set_covariate_point(ParameterCloud& cloud, Eigen::Index k, const NaturalParams& p) {
  cloud.intercept[k] = p.beta0;
  cloud.slope[k] = p.beta1;
  for (Eigen::Index e = 0; e < p.eta.size(); ++e) cloud.effects(k, e) = p.eta[e];
}

std::shared_ptr<ParameterCloud> cov3_cloud(const ModelSpec& spec, std::vector<GridAxis>& axes) {
  const auto res = effective_resolution(spec);
  const auto& c = spec.constants;
  axes = {{"gamma_max", c.x_min, c.x_max, res[0]}, {"rho1", 0.0, c.theta, res[1]}, {"rho2", 0.0, c.theta, res[2]}};
  // count the support first: rho2 < rho1 strictly
  Eigen::Index n = 0;
  for (int j = 0; j < res[1]; ++j)
    for (int k = 0; k < res[2]; ++k)
      if (axes[2].midpoint(k) < axes[1].midpoint(j)) ++n;
  n *= res[0];

  auto cloud = std::make_shared<ParameterCloud>();
  cloud->intercept.resize(n);
  cloud->slope.resize(n);
  cloud->effects.resize(n, 1);
  cloud->coords.resize(n, 3);
  cloud->cell.resize(n);
  Eigen::Index idx = 0;
  for (int i = 0; i < res[0]; ++i) {
    for (int j = 0; j < res[1]; ++j) {
      for (int k = 0; k < res[2]; ++k) {
        const double rho1 = axes[1].midpoint(j);
        const double rho2 = axes[2].midpoint(k);
        if (!(rho2 < rho1)) continue;
        CovariateState cs;
        cs.gamma_max = axes[0].midpoint(i);
        cs.rho1 = rho1;
        cs.rho2 = rho2;
        set_covariate_point(*cloud, idx, covariate_point(spec, cs));
        cloud->coords.row(idx) << cs.gamma_max, rho1, rho2;
        cloud->cell[idx] = (static_cast<std::int64_t>(i) * res[1] + j) * res[2] + k;
        ++idx;
      }
    }
  }
  return cloud;
}

std::shared_ptr<ParameterCloud> cov4_cloud(const ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.mc_draws);
  auto cloud = std::make_shared<ParameterCloud>();
  cloud->intercept.resize(n);
  cloud->slope.resize(n);
  cloud->effects.resize(n, 2);
  cloud->coords.resize(n, 4);
  cloud->cell.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd d = draw_prior(spec, spec.mc_seed, static_cast<std::uint64_t>(i));
    CovariateState cs;
    cs.gamma_max = d[0];
    cs.rho1 = d[1];
    cs.rho2 = d[2];
    cs.rho3 = d[3];
    set_covariate_point(*cloud, i, covariate_point(spec, cs));
    cloud->coords.row(i) = d.transpose();
    cloud->cell[i] = i;
  }
  return cloud;
}

}  // namespace

PosteriorGrid prior_grid(const ModelSpec& spec) {
  validate(spec);
  PosteriorGrid g;
  g.spec = spec;
  switch (spec.prior.kind) {
    case PriorKind::uniform_2p: g.cloud = two_param_cloud(spec, g.axes); break;
    case PriorKind::uniform_1p: g.cloud = one_param_cloud(spec, g.axes); break;
    case PriorKind::uniform_cov3: g.cloud = cov3_cloud(spec, g.axes); break;
    case PriorKind::uniform_cov4: g.cloud = cov4_cloud(spec); break;
  }
  // uniform priors: equal log prior on the support
  g.log_weights = Eigen::ArrayXd::Zero(g.cloud->intercept.size());
  g.n_obs = 0;
  normalize(g);
  return g;
}

void normalize(PosteriorGrid& grid) {
  if (grid.log_weights.size() == 0) throw DegeneratePosterior("posterior has an empty support");
  const double m = grid.log_weights.maxCoeff();
  if (!std::isfinite(m)) throw DegeneratePosterior("data are impossible under the entire prior support");
  Eigen::ArrayXd e = (grid.log_weights - m).exp();
  const double s = pairwise_sum(e);
  grid.log_norm = m + std::log(s);
  grid.mass = e / s;
}

void absorb(PosteriorGrid& grid, const Observation& obs) {
  const auto& spec = grid.spec;
  const auto& cloud = *grid.cloud;
  std::optional<OneParamDesign> design;
  if (spec.prior.kind == PriorKind::uniform_1p) design = one_param_design(spec);
  const Eigen::VectorXd w = scaled_covariates(spec, obs.covariates);
  const double f = dose_feature(spec, design ? &*design : nullptr, obs.dose);

  if (std::isinf(f)) {
    // dose at x*: Pr(DLT) is zero at every support point
    if (obs.dlt) grid.log_weights.setConstant(kNegInf);
  } else {
    Eigen::ArrayXd lp = cloud.intercept + cloud.slope * f;
    if (w.size() > 0) lp += (cloud.effects.matrix() * w).array();
    // log F(u) = -(max(-u, 0) + log(1 + exp(-|u|))), u = +lp for a DLT, -lp otherwise
    const double sign = obs.dlt ? -1.0 : 1.0;
    grid.log_weights -= (sign * lp).max(0.0) + (1.0 + (-lp.abs()).exp()).log();
  }
  ++grid.n_obs;
  normalize(grid);
}

PosteriorGrid build_posterior(const ModelSpec& spec, std::span<const Observation> obs) {
  PosteriorGrid g = prior_grid(spec);
  for (const auto& o : obs) absorb(g, o);
  return g;
}

// ---------------------------------------------------------------------------
// Marginal of the MTD

MtdMarginal binned_marginal(Eigen::ArrayXd edges, Eigen::ArrayXd mass) {
  if (edges.size() != mass.size() + 1 || mass.size() == 0)
    throw std::invalid_argument("binned_marginal: need k bins and k + 1 edges");
  const double total = pairwise_sum(mass);
  if (!(total > 0)) throw DegeneratePosterior("marginal has no mass");
  MtdMarginal m;
  m.edges = std::move(edges);
  m.mass = mass / total;
  m.cumulative.resize(m.mass.size() + 1);
  m.cumulative[0] = 0.0;
  for (Eigen::Index j = 0; j < m.mass.size(); ++j) m.cumulative[j + 1] = m.cumulative[j] + m.mass[j];
  return m;
}

MtdMarginal atom_marginal(Eigen::ArrayXd values, Eigen::ArrayXd mass) {
  const Eigen::Index n = values.size();
  if (n == 0 || mass.size() != n) throw std::invalid_argument("atom_marginal: values and mass must align");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return values[a] < values[b]; });
  Eigen::ArrayXd sorted(n);
  Eigen::ArrayXd sorted_mass(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sorted[i] = values[order[static_cast<std::size_t>(i)]];
    sorted_mass[i] = mass[order[static_cast<std::size_t>(i)]];
  }
  // atom j's mass spreads over [v_{j-1}, v_j]; the first atom is a point mass
  Eigen::ArrayXd edges(n + 1);
  edges[0] = sorted[0];
  edges.tail(n) = sorted;
  MtdMarginal m = binned_marginal(std::move(edges), std::move(sorted_mass));
  m.atoms = std::move(sorted);
  return m;
}

MtdMarginal mtd_marginal(const PosteriorGrid& grid, std::span<const double> w) {
  const auto& spec = grid.spec;
  const auto& cloud = *grid.cloud;
  const PriorKind kind = spec.prior.kind;

  if (is_covariate_kind(kind)) {
    const Eigen::VectorXd ws = scaled_covariates(spec, w);
    const double lt = link_inv(spec.constants.theta);
    Eigen::ArrayXd values = (lt - cloud.intercept - (cloud.effects.matrix() * ws).array()) / cloud.slope;
    return atom_marginal(std::move(values), grid.mass);
  }
  if (!w.empty()) throw DomainError("model has no covariates");

  const GridAxis& axis = kind == PriorKind::uniform_2p ? grid.axes[1] : grid.axes[0];
  Eigen::ArrayXd mass = Eigen::ArrayXd::Zero(axis.count);
  for (Eigen::Index i = 0; i < grid.mass.size(); ++i) mass[cloud.mtd_bin[i]] += grid.mass[i];
  Eigen::ArrayXd edges(axis.count + 1);
  if (kind == PriorKind::uniform_2p) {
    for (int j = 0; j <= axis.count; ++j) edges[j] = axis.edge(j);
    edges[axis.count] = axis.hi;
  } else {
    const auto d = one_param_design(spec);
    for (int j = 0; j <= axis.count; ++j) edges[j] = mtd_one_param(j == axis.count ? axis.hi : axis.edge(j), d);
  }
  return binned_marginal(std::move(edges), std::move(mass));
}

double cdf(const MtdMarginal& m, double t) {
  const Eigen::Index k = m.bins();
  if (t < m.edges[0]) return 0.0;
  if (t >= m.edges[k]) return 1.0;
  const auto it = std::upper_bound(m.edges.begin(), m.edges.end(), t);
  const Eigen::Index j = (it - m.edges.begin()) - 1;
  const double width = m.edges[j + 1] - m.edges[j];
  return m.cumulative[j] + m.mass[j] * (t - m.edges[j]) / width;
}

double quantile(const MtdMarginal& m, double p) {
  const Eigen::Index k = m.bins();
  if (p <= 0.0) return m.edges[0];
  const auto it = std::lower_bound(m.cumulative.begin(), m.cumulative.end(), p);
  const Eigen::Index j = it - m.cumulative.begin();
  if (j == 0) return m.edges[0];
  if (j > k) return m.edges[k];
  const double mass = m.mass[j - 1];
  const double frac = mass > 0 ? std::clamp((p - m.cumulative[j - 1]) / mass, 0.0, 1.0) : 1.0;
  return m.edges[j - 1] + frac * (m.edges[j] - m.edges[j - 1]);
}

double upper_quantile(const MtdMarginal& m, double p) {
  const Eigen::Index k = m.bins();
  if (p < 0.0) return m.edges[0];
  if (p >= m.cumulative[k]) return m.edges[k];
  const auto it = std::upper_bound(m.cumulative.begin(), m.cumulative.end(), p);
  const Eigen::Index j = it - m.cumulative.begin();
  if (j == 0) return m.edges[0];
  const double mass = m.mass[j - 1];
  const double frac = mass > 0 ? std::clamp((p - m.cumulative[j - 1]) / mass, 0.0, 1.0) : 0.0;
  return m.edges[j - 1] + frac * (m.edges[j] - m.edges[j - 1]);
}

Interval hpd(const MtdMarginal& m, double level) {
  if (!(level > 0.0)) throw std::invalid_argument("hpd: level must be positive");
  const Eigen::Index k = m.bins();
  if (level >= 1.0) return {m.lo(), m.hi()};
  const double total = m.cumulative[k];
  constexpr double kMassTol = 1e-12;

  std::vector<Interval> candidates;
  candidates.reserve(static_cast<std::size_t>(2 * (k + 1)));
  for (Eigen::Index i = 0; i <= k; ++i) {
    const double pa = m.cumulative[i];
    if (pa + level <= total + kMassTol) candidates.push_back({m.edges[i], quantile(m, pa + level)});
    const double pb = m.cumulative[i];
    if (pb - level >= -kMassTol) candidates.push_back({upper_quantile(m, std::max(pb - level, 0.0)), m.edges[i]});
  }
  if (candidates.empty()) return {m.lo(), m.hi()};

  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) best = std::min(best, c.length());
  const double tie = 1e-9 * std::max(m.hi() - m.lo(), 1e-300);
  const double center = 0.5 * (m.lo() + m.hi());
  Interval chosen = candidates.front();
  double chosen_offset = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (c.length() > best + tie) continue;
    const double offset = std::abs(0.5 * (c.lo + c.hi) - center);
    if (offset < chosen_offset) {
      chosen_offset = offset;
      chosen = c;
    }
  }
  return chosen;
}

MtdSummary summarize(const MtdMarginal& m) {
  MtdSummary s;
  const Eigen::Index k = m.bins();
  if (m.atoms.size() == 0) {
    const Eigen::ArrayXd mid = 0.5 * (m.edges.head(k) + m.edges.tail(k));
    const Eigen::ArrayXd width = m.edges.tail(k) - m.edges.head(k);
    s.mean = pairwise_sum(Eigen::ArrayXd(m.mass * mid));
    const Eigen::ArrayXd second = m.mass * ((mid - s.mean).square() + width.square() / 12.0);
    s.sd = std::sqrt(std::max(0.0, pairwise_sum(second)));
    Eigen::ArrayXd density(k);
    for (Eigen::Index j = 0; j < k; ++j)
      density[j] = width[j] > 0 ? m.mass[j] / width[j] : (m.mass[j] > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    // a flat top (e.g. the uniform prior) reports its middle bin, not rounding noise
    const double top = density.maxCoeff();
    std::vector<Eigen::Index> ties;
    for (Eigen::Index j = 0; j < k; ++j)
      if (density[j] == top || density[j] >= top * (1.0 - 1e-9)) ties.push_back(j);
    const Eigen::Index best = ties[ties.size() / 2];
    s.mode = mid[best];
  } else {
    s.mean = pairwise_sum(Eigen::ArrayXd(m.mass * m.atoms));
    s.sd = std::sqrt(std::max(0.0, pairwise_sum(Eigen::ArrayXd(m.mass * (m.atoms - s.mean).square()))));
    const double lo = m.atoms[0];
    const double hi = m.atoms[m.atoms.size() - 1];
    if (hi > lo) {
      constexpr int kBins = 201;
      Eigen::ArrayXd hist = Eigen::ArrayXd::Zero(kBins);
      const double width = (hi - lo) / kBins;
      for (Eigen::Index i = 0; i < m.atoms.size(); ++i) {
        const int b = std::min(kBins - 1, static_cast<int>((m.atoms[i] - lo) / width));
        hist[b] += m.mass[i];
      }
      Eigen::Index best = 0;
      hist.maxCoeff(&best);
      s.mode = lo + (static_cast<double>(best) + 0.5) * width;
    } else {
      s.mode = lo;
    }
  }
  s.median = quantile(m, 0.5);
  return s;
}

double expected_loss(const MtdMarginal& m, double x, double alpha) {
  // below = E[(x - gamma)^+], above = E[(gamma - x)^+] = E[gamma] - x + below
  double below = 0.0;
  double mean = 0.0;
  for (Eigen::Index j = 0; j < m.bins(); ++j) {
    const double a = m.edges[j];
    const double b = m.edges[j + 1];
    const double mass = m.mass[j];
    mean += mass * 0.5 * (a + b);
    if (x >= b)
      below += mass * (x - 0.5 * (a + b));
    else if (x > a)
      below += mass * (x - a) * (x - a) / (2.0 * (b - a));
  }
  const double above = mean - x + below;
  return alpha * above + (1.0 - alpha) * below;
}

std::vector<std::pair<double, double>> density_steps(const MtdMarginal& m, int histogram_bins) {
  std::vector<std::pair<double, double>> out;
  if (m.atoms.size() == 0) {
    for (Eigen::Index j = 0; j < m.bins(); ++j) {
      const double width = m.edges[j + 1] - m.edges[j];
      if (!(width > 0)) continue;
      const double d = m.mass[j] / width;
      out.emplace_back(m.edges[j], d);
      out.emplace_back(m.edges[j + 1], d);
    }
    return out;
  }
  const double lo = m.lo();
  const double hi = m.hi();
  if (!(hi > lo) || histogram_bins < 1) return out;
  Eigen::ArrayXd hist = Eigen::ArrayXd::Zero(histogram_bins);
  const double width = (hi - lo) / histogram_bins;
  for (Eigen::Index i = 0; i < m.atoms.size(); ++i) {
    const int b = std::min(histogram_bins - 1, static_cast<int>((m.atoms[i] - lo) / width));
    hist[b] += m.mass[i];
  }
  for (int b = 0; b < histogram_bins; ++b) {
    const double d = hist[b] / width;
    out.emplace_back(lo + b * width, d);
    out.emplace_back(b + 1 == histogram_bins ? hi : lo + (b + 1) * width, d);
  }
  return out;
}

double marginal_cdf_mtd(const PosteriorGrid& grid, double t, std::span<const double> w) {
  return cdf(mtd_marginal(grid, w), t);
}

double quantile_mtd(const PosteriorGrid& grid, double alpha, std::span<const double> w) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("quantile_mtd: alpha must lie in (0, 1)");
  return quantile(mtd_marginal(grid, w), alpha);
}

Interval hpd_interval(const PosteriorGrid& grid, double level, std::span<const double> w) {
  if (!(level > 0 && level <= 1)) throw std::invalid_argument("hpd_interval: level must lie in (0, 1]");
  return hpd(mtd_marginal(grid, w), level);
}

MtdSummary summaries(const PosteriorGrid& grid, std::span<const double> w) {
  return summarize(mtd_marginal(grid, w));
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle

Eigen::ArrayXd draw_prior(const ModelSpec& spec, std::uint64_t seed, std::uint64_t index) {
  const auto& c = spec.constants;
  auto u = [&](std::uint64_t dim) { return rng::open_uniform(seed, index, dim, 0x5eed); };
  switch (spec.prior.kind) {
    case PriorKind::uniform_2p: {
      Eigen::ArrayXd d(2);
      d << c.theta * u(0), c.x_min + (c.x_max - c.x_min) * u(1);
      return d;
    }
    case PriorKind::uniform_1p: {
      Eigen::ArrayXd d(1);
      d << spec.prior.beta_lo + (spec.prior.beta_hi - spec.prior.beta_lo) * u(0);
      return d;
    }
    case PriorKind::uniform_cov3:
    case PriorKind::uniform_cov4: {
      // uniform on {rho2 < rho1 <= theta}: order statistics of two uniforms
      const double a = u(1);
      const double b = u(2);
      Eigen::ArrayXd d(spec.prior.kind == PriorKind::uniform_cov3 ? 3 : 4);
      d[0] = c.x_min + (c.x_max - c.x_min) * u(0);
      d[1] = c.theta * std::max(a, b);
      d[2] = c.theta * std::min(a, b);
      if (d.size() == 4) d[3] = c.theta * u(3);
      return d;
    }
  }
  throw std::logic_error("draw_prior: unhandled prior kind");
}

namespace {

NaturalParams params_of_draw(const ModelSpec& spec, const OneParamDesign* design, const Eigen::ArrayXd& d) {
  switch (spec.prior.kind) {
    case PriorKind::uniform_2p: return natural_params(TwoParamState{d[0], d[1]}, spec.constants);
    case PriorKind::uniform_1p: return NaturalParams{design->upper_logit, d[0], {}};
    case PriorKind::uniform_cov3:
    case PriorKind::uniform_cov4: {
      CovariateState cs;
      cs.gamma_max = d[0];
      cs.rho1 = d[1];
      cs.rho2 = d[2];
      if (d.size() == 4) cs.rho3 = d[3];
      return covariate_point(spec, cs);
    }
  }
  throw std::logic_error("params_of_draw: unhandled prior kind");
}

}  // namespace

McOracle mc_oracle(const ModelSpec& spec, std::span<const Observation> obs, std::size_t sample_count,
                   std::uint64_t seed) {
  validate(spec);
  if (sample_count < 10000) throw std::invalid_argument("mc_oracle: need at least 10^4 draws");
  std::optional<OneParamDesign> design;
  if (spec.prior.kind == PriorKind::uniform_1p) design = one_param_design(spec);

  McOracle o;
  o.spec = spec;
  o.sample_count = sample_count;
  o.seed = seed;
  const auto n = static_cast<Eigen::Index>(sample_count);
  o.draws.resize(n, static_cast<Eigen::Index>(parameter_count(spec.prior.kind)));
  Eigen::ArrayXd logw(n);

  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (sample_count + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(sample_count, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const Eigen::ArrayXd d = draw_prior(spec, seed, i);
      const auto row = static_cast<Eigen::Index>(i);
      o.draws.row(row) = d.transpose();
      logw[row] = likelihood_log(obs, params_of_draw(spec, design ? &*design : nullptr, d), spec);
    }
  });

  const double m = logw.maxCoeff();
  if (!std::isfinite(m)) throw DegeneratePosterior("mc_oracle: every draw has zero likelihood");
  Eigen::ArrayXd w = (logw - m).exp();
  o.weights = w / pairwise_sum(w);
  o.effective_sample_size = 1.0 / pairwise_sum(Eigen::ArrayXd(o.weights.square()));
  o.low_ess = o.effective_sample_size < 100.0;
  return o;
}

Eigen::ArrayXd McOracle::mtd_values(std::span<const double> w) const {
  const Eigen::Index n = draws.rows();
  Eigen::ArrayXd out(n);
  switch (spec.prior.kind) {
    case PriorKind::uniform_2p:
      if (!w.empty()) throw DomainError("model has no covariates");
      out = draws.col(1);
      break;
    case PriorKind::uniform_1p: {
      if (!w.empty()) throw DomainError("model has no covariates");
      const auto d = one_param_design(spec);
      for (Eigen::Index i = 0; i < n; ++i) out[i] = mtd_one_param(draws(i, 0), d);
      break;
    }
    case PriorKind::uniform_cov3:
    case PriorKind::uniform_cov4: {
      const Eigen::VectorXd ws = scaled_covariates(spec, w);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::ArrayXd d = draws.row(i).transpose();
        out[i] = conditional_mtd<double>(ws, params_of_draw(spec, nullptr, d), spec.constants.theta);
      }
      break;
    }
  }
  return out;
}

double McOracle::cdf(double t, std::span<const double> w) const {
  const Eigen::ArrayXd v = mtd_values(w);
  return pairwise_sum(Eigen::ArrayXd((v <= t).select(weights, 0.0)));
}

double McOracle::quantile(double p, std::span<const double> w) const {
  const Eigen::ArrayXd v = mtd_values(w);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  double acc = 0.0;
  for (auto i : order) {
    acc += weights[i];
    if (acc >= p) return v[i];
  }
  return v[order.back()];
}

double McOracle::mean(std::span<const double> w) const {
  return pairwise_sum(Eigen::ArrayXd(mtd_values(w) * weights));
}

}  // namespace ewoc
