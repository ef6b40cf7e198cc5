#ifndef EWOC_POSTERIOR_HPP
#define EWOC_POSTERIOR_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ewoc/models.hpp"

namespace ewoc {

enum class PriorKind {
  uniform_2p,    ///< rho0 ~ U(0, theta), gamma ~ U(x_min, x_max), independent
  uniform_cov3,  ///< (gamma_max, rho1, rho2) uniform on rho2 < rho1 <= theta
  uniform_cov4,  ///< cov3 plus rho3 ~ U(0, theta], Monte Carlo support
  uniform_1p,    ///< beta ~ U(beta_lo, beta_hi)
};

std::string to_string(PriorKind kind);
PriorKind prior_kind_from_string(const std::string& name);

struct PriorSpec {
  PriorKind kind = PriorKind::uniform_2p;
  // uniform_1p only
  double beta_lo = 0.0;
  double beta_hi = 0.0;
  double x_star = 0.0;
  double x_star2 = 0.0;

  bool operator==(const PriorSpec&) const = default;
};

/// A baseline covariate. The first covariate of a covariate model is the
/// continuous one (bounds c1, c2; its reference value is c2). The second, when
/// present, is a two-valued group indicator whose reference is z1.
struct CovariateSpec {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  double reference = 1.0;

  bool operator==(const CovariateSpec&) const = default;

  double scale(double w) const { return (w - lo) / (hi - lo); }
};

/// Everything the posterior needs to know about the model being fitted.
struct ModelSpec {
  DesignConstants constants;
  PriorSpec prior;
  std::vector<CovariateSpec> covariates;
  /// Per-axis grid resolution; empty selects the defaults.
  std::vector<int> resolution;
  /// Prior draws for the Monte Carlo (uniform_cov4) support.
  std::size_t mc_draws = 1'000'000;
  std::uint64_t mc_seed = 20100901;

  bool operator==(const ModelSpec&) const = default;

  bool has_covariates() const { return !covariates.empty(); }
  std::size_t covariate_count() const { return covariates.size(); }
};

/// Field-level validation; throws InvalidConfig.
void validate(const ModelSpec& spec, const std::string& prefix = "");
std::vector<int> effective_resolution(const ModelSpec& spec);
OneParamDesign one_param_design(const ModelSpec& spec);
/// Lowest and highest admissible doses; for the one-parameter model these are
/// the MTDs at beta_lo and beta_hi.
std::pair<double, double> dose_bounds(const ModelSpec& spec);

/// Natural parameters of the reference-group covariate state, in scaled covariate units.
NaturalParams covariate_point(const ModelSpec& spec, const CovariateState& cs);

struct Observation {
  double dose = 0.0;
  int dlt = 0;
  std::vector<double> covariates;
  int patient_id = 0;

  bool operator==(const Observation&) const = default;
};

struct GridAxis {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;

  double width() const { return (hi - lo) / count; }
  double midpoint(int i) const { return lo + (i + 0.5) * width(); }
  double edge(int i) const { return lo + i * width(); }
};

/// Support points in natural-parameter form, shared between copies of a grid.
struct ParameterCloud {
  Eigen::ArrayXd intercept;
  Eigen::ArrayXd slope;
  /// points x covariates, acting on scaled covariates
  Eigen::ArrayXXd effects;
  /// points x model parameters, in the parameterization the prior is stated in
  Eigen::ArrayXXd coords;
  /// flat row-major tensor index (grid) or draw index (Monte Carlo)
  Eigen::Array<std::int64_t, Eigen::Dynamic, 1> cell;
  /// bin on the MTD axis for models whose MTD is a monotone function of one axis
  Eigen::ArrayXi mtd_bin;
};

/// Discretized joint posterior. log_weights hold log prior + log likelihood
/// per support point; mass is the normalized weight exp(log_weights - log_norm).
struct PosteriorGrid {
  ModelSpec spec;
  std::vector<GridAxis> axes;
  std::shared_ptr<const ParameterCloud> cloud;
  Eigen::ArrayXd log_weights;
  Eigen::ArrayXd mass;
  double log_norm = 0.0;
  int n_obs = 0;

  Eigen::Index support_size() const { return log_weights.size(); }
  /// Size of the full row-major tensor (support plus zero-prior cells).
  std::int64_t tensor_size() const;
  bool monte_carlo() const { return spec.prior.kind == PriorKind::uniform_cov4; }
};

/// Log-likelihood of obs at one natural-parameter point (covariates in original units).
double likelihood_log(std::span<const Observation> obs, const NaturalParams& params, const ModelSpec& spec);
double likelihood_log(std::span<const Observation> obs, const TwoParamState& state, const ModelSpec& spec);

PosteriorGrid prior_grid(const ModelSpec& spec);
/// Multiplies one observation's likelihood into the grid and renormalizes.
void absorb(PosteriorGrid& grid, const Observation& obs);
/// Recomputes log_norm and mass from log_weights.
void normalize(PosteriorGrid& grid);
PosteriorGrid build_posterior(const ModelSpec& spec, std::span<const Observation> obs);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

/// Marginal distribution of the (conditional) MTD as a piecewise-uniform density:
/// bin j spans [edges(j), edges(j+1)] and carries mass(j). Zero-width bins are atoms.
struct MtdMarginal {
  Eigen::ArrayXd edges;
  Eigen::ArrayXd mass;
  Eigen::ArrayXd cumulative;
  /// Point values when the marginal is built from point masses; empty for binned marginals.
  Eigen::ArrayXd atoms;

  Eigen::Index bins() const { return mass.size(); }
  double lo() const { return edges(0); }
  double hi() const { return edges(edges.size() - 1); }
};

struct MtdSummary {
  double mean = 0.0;
  double sd = 0.0;
  double mode = 0.0;
  double median = 0.0;
};

MtdMarginal mtd_marginal(const PosteriorGrid& grid, std::span<const double> w = {});
/// Builds a marginal from arbitrary bins; mass is normalized to one.
MtdMarginal binned_marginal(Eigen::ArrayXd edges, Eigen::ArrayXd mass);
MtdMarginal atom_marginal(Eigen::ArrayXd values, Eigen::ArrayXd mass);

double cdf(const MtdMarginal& m, double t);
/// Smallest t with cdf(t) >= p.
double quantile(const MtdMarginal& m, double p);
/// Largest t with cdf(t) <= p.
double upper_quantile(const MtdMarginal& m, double p);
Interval hpd(const MtdMarginal& m, double level);
MtdSummary summarize(const MtdMarginal& m);
/// Posterior expected asymmetric loss: alpha (gamma - x)^+ + (1 - alpha) (x - gamma)^+.
double expected_loss(const MtdMarginal& m, double x, double alpha);
/// Step-function samples (dose, density) whose trapezoid integral equals one.
std::vector<std::pair<double, double>> density_steps(const MtdMarginal& m, int histogram_bins = 100);

double marginal_cdf_mtd(const PosteriorGrid& grid, double t, std::span<const double> w = {});
double quantile_mtd(const PosteriorGrid& grid, double alpha, std::span<const double> w = {});
Interval hpd_interval(const PosteriorGrid& grid, double level, std::span<const double> w = {});
MtdSummary summaries(const PosteriorGrid& grid, std::span<const double> w = {});

/// Self-normalized importance sample from the prior, weighted by the likelihood.
struct McOracle {
  ModelSpec spec;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
  /// sample_count x model parameters, prior parameterization
  Eigen::ArrayXXd draws;
  Eigen::ArrayXd weights;
  double effective_sample_size = 0.0;
  bool low_ess = false;

  /// MTD of every draw at covariate value w (original units).
  Eigen::ArrayXd mtd_values(std::span<const double> w = {}) const;
  double cdf(double t, std::span<const double> w = {}) const;
  double quantile(double p, std::span<const double> w = {}) const;
  double mean(std::span<const double> w = {}) const;
};

/// One draw from the prior in its own parameterization, keyed by (seed, index).
Eigen::ArrayXd draw_prior(const ModelSpec& spec, std::uint64_t seed, std::uint64_t index);
McOracle mc_oracle(const ModelSpec& spec, std::span<const Observation> obs, std::size_t sample_count,
                   std::uint64_t seed);

}  // namespace ewoc

#endif  // EWOC_POSTERIOR_HPP
