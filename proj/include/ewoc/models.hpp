#ifndef EWOC_MODELS_HPP
#define EWOC_MODELS_HPP

// Dose-toxicity models and their closed-form MTD maps.
//
// Everything here is a pure function templated on the scalar type so the
// same code runs in double for the engine and in extended precision when
// checking it.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>

#include "ewoc/errors.hpp"

namespace ewoc {

enum class Link { logistic };

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct BasicDesignConstants {
  Scalar theta{};
  Scalar x_min{};
  Scalar x_max{};
  /// Only the one-parameter model uses epsilon.
  std::optional<Scalar> epsilon;
  Link link = Link::logistic;

  bool operator==(const BasicDesignConstants&) const = default;
};

template <typename Scalar>
struct BasicOneParamDesign {
  Scalar beta_lo{};
  Scalar beta_hi{};
  Scalar x_star{};
  Scalar x_star2{};
  Scalar phi{};
  /// F^{-1}(1 - epsilon): the linear predictor at x = x**.
  Scalar upper_logit{};
  /// L* = [-phi / beta_lo, -phi / beta_hi] on the log-standardized dose scale.
  Scalar log_range_lo{};
  Scalar log_range_hi{};
};

template <typename Scalar>
struct BasicTwoParamState {
  Scalar rho0{};
  Scalar gamma{};
};

/// Second (group) covariate coding: reference is z1, alternate is z2.
template <typename Scalar>
struct BasicGroupCoding {
  Scalar reference{};
  Scalar alternate{};
};

template <typename Scalar>
struct BasicCovariateState {
  Scalar gamma_max{};
  Scalar rho1{};
  Scalar rho2{};
  std::optional<Scalar> rho3;
  Scalar c1{};
  Scalar c2{};
};

template <typename Scalar>
struct BasicNaturalParams {
  Scalar beta0{};
  Scalar beta1{};
  VectorX<Scalar> eta;
};

using DesignConstants = BasicDesignConstants<double>;
using OneParamDesign = BasicOneParamDesign<double>;
using TwoParamState = BasicTwoParamState<double>;
using GroupCoding = BasicGroupCoding<double>;
using CovariateState = BasicCovariateState<double>;
using NaturalParams = BasicNaturalParams<double>;

// ---------------------------------------------------------------------------
// Link function

/// Logistic c.d.f., evaluated on the branch that cannot overflow.
template <typename Scalar>
Scalar link_cdf(const Scalar& u) {
  using std::exp;
  using std::isfinite;
  if (!isfinite(u)) throw DomainError("link_cdf: non-finite argument");
  if (u >= 0) return Scalar(1) / (Scalar(1) + exp(-u));
  const Scalar e = exp(u);
  return e / (Scalar(1) + e);
}

/// log F(u), accurate in both tails.
template <typename Scalar>
Scalar log_link_cdf(const Scalar& u) {
  using std::exp;
  using std::log1p;
  if (u >= 0) return -log1p(exp(-u));
  return u - log1p(exp(u));
}

/// log(1 - F(u)).
template <typename Scalar>
Scalar log_link_ccdf(const Scalar& u) {
  return log_link_cdf<Scalar>(-u);
}

/// F^{-1}(p), the logit.
template <typename Scalar>
Scalar link_inv(const Scalar& p) {
  using std::log;
  using std::log1p;
  if (!(p > 0 && p < 1)) throw DomainError("link_inv: probability must lie in (0, 1)");
  return log(p) - log1p(-p);
}

// ---------------------------------------------------------------------------
// Design constants

template <typename Scalar>
void validate(const BasicDesignConstants<Scalar>& c) {
  if (!(c.theta > 0 && c.theta < 1)) throw InvalidDesign("theta must lie in (0, 1)");
  if (!(c.x_min < c.x_max)) throw InvalidDesign("x_min must be below x_max");
  if (c.epsilon) {
    if (!(*c.epsilon > 0 && *c.epsilon < 1)) throw InvalidDesign("epsilon must lie in (0, 1)");
    if (!(c.theta < 1 - *c.epsilon)) throw InvalidDesign("theta must be below 1 - epsilon");
  }
}

/// phi = F^{-1}(1 - epsilon) - F^{-1}(theta).
template <typename Scalar>
Scalar phi(const Scalar& theta, const Scalar& epsilon) {
  if (!(theta > 0 && epsilon > 0 && epsilon < 1)) throw InvalidDesign("phi: theta and epsilon must lie in (0, 1)");
  if (!(theta < 1 - epsilon)) throw InvalidDesign("phi: theta must be below 1 - epsilon");
  return link_inv<Scalar>(1 - epsilon) - link_inv<Scalar>(theta);
}

// ---------------------------------------------------------------------------
// One-parameter model: P(Y=1|x) = F(F^{-1}(1-eps) + beta * log((x-x*)/(x**-x*)))

template <typename Scalar>
BasicOneParamDesign<Scalar> make_one_param_design(const BasicDesignConstants<Scalar>& c, Scalar beta_lo,
                                                  Scalar beta_hi, Scalar x_star, Scalar x_star2) {
  if (!c.epsilon) throw InvalidDesign("one-parameter model requires epsilon");
  if (!(beta_lo > 0 && beta_lo <= beta_hi)) throw InvalidDesign("need 0 < beta_lo <= beta_hi");
  if (!(x_star < x_star2)) throw InvalidDesign("need x_star < x_star2");
  BasicOneParamDesign<Scalar> d;
  d.beta_lo = beta_lo;
  d.beta_hi = beta_hi;
  d.x_star = x_star;
  d.x_star2 = x_star2;
  d.phi = phi<Scalar>(c.theta, *c.epsilon);
  d.upper_logit = link_inv<Scalar>(1 - *c.epsilon);
  d.log_range_lo = -d.phi / beta_lo;
  d.log_range_hi = -d.phi / beta_hi;
  return d;
}

/// z = log((x - x*) / (x** - x*)).
template <typename Scalar>
Scalar log_standardized_dose(const Scalar& x, const BasicOneParamDesign<Scalar>& d) {
  using std::log;
  if (!(x > d.x_star)) throw DomainError("log-standardized dose needs x > x_star");
  return log((x - d.x_star) / (d.x_star2 - d.x_star));
}

template <typename Scalar>
Scalar dose_from_log_standardized(const Scalar& z, const BasicOneParamDesign<Scalar>& d) {
  using std::exp;
  return d.x_star + (d.x_star2 - d.x_star) * exp(z);
}

template <typename Scalar>
Scalar prob_dlt_one_param(const Scalar& x, const Scalar& beta, const BasicOneParamDesign<Scalar>& d,
                          const BasicDesignConstants<Scalar>& c) {
  using std::isfinite;
  (void)c;
  if (!isfinite(x)) throw DomainError("prob_dlt_one_param: non-finite dose");
  if (!(beta > 0)) throw InvalidParameter("prob_dlt_one_param: beta must be positive");
  if (x < d.x_star) throw DomainError("prob_dlt_one_param: dose below x_star");
  if (x > d.x_star2) throw DomainError("prob_dlt_one_param: dose above x_star2");
  if (x == d.x_star) return Scalar(0);
  return link_cdf<Scalar>(d.upper_logit + beta * log_standardized_dose(x, d));
}

/// gamma = x* + (x** - x*) exp(-phi / beta).
template <typename Scalar>
Scalar mtd_one_param(const Scalar& beta, const BasicOneParamDesign<Scalar>& d) {
  if (!(beta > 0)) throw InvalidParameter("mtd_one_param: beta must be positive");
  return dose_from_log_standardized<Scalar>(-d.phi / beta, d);
}

// ---------------------------------------------------------------------------
// Two-parameter logistic model in the (rho0, gamma) parameterization

template <typename Scalar>
BasicNaturalParams<Scalar> natural_params(const BasicTwoParamState<Scalar>& s, const BasicDesignConstants<Scalar>& c) {
  if (s.gamma == c.x_min) throw DegenerateModel("natural_params: gamma equals x_min");
  if (!(s.rho0 > 0 && s.rho0 < c.theta)) throw InvalidParameter("natural_params: rho0 must lie in (0, theta)");
  const Scalar l_theta = link_inv<Scalar>(c.theta);
  const Scalar l_rho0 = link_inv<Scalar>(s.rho0);
  BasicNaturalParams<Scalar> p;
  p.beta0 = (c.x_min * l_theta - s.gamma * l_rho0) / (c.x_min - s.gamma);
  p.beta1 = (l_rho0 - l_theta) / (c.x_min - s.gamma);
  if (!(p.beta1 > 0)) throw InvalidParameter("natural_params: gamma must exceed x_min");
  return p;
}

template <typename Scalar>
Scalar prob_dlt_two_param(const Scalar& x, const BasicTwoParamState<Scalar>& s, const BasicDesignConstants<Scalar>& c) {
  const auto p = natural_params(s, c);
  return link_cdf<Scalar>(p.beta0 + p.beta1 * x);
}

// ---------------------------------------------------------------------------
// Covariate-adjusted logistic model

template <typename Scalar>
Scalar covariate_predictor(const Scalar& x, const VectorX<Scalar>& w, const BasicNaturalParams<Scalar>& p) {
  if (w.size() != p.eta.size()) throw DomainError("covariate dimension does not match eta");
  Scalar lp = p.beta0 + p.beta1 * x;
  for (Eigen::Index k = 0; k < w.size(); ++k) lp += p.eta[k] * w[k];
  return lp;
}

template <typename Scalar>
Scalar prob_dlt_covariate(const Scalar& x, const VectorX<Scalar>& w, const BasicNaturalParams<Scalar>& p) {
  return link_cdf<Scalar>(covariate_predictor(x, w, p));
}

/// gamma(w) = (logit(theta) - beta0 - eta'w) / beta1.
template <typename Scalar>
Scalar conditional_mtd(const VectorX<Scalar>& w, const BasicNaturalParams<Scalar>& p, const Scalar& theta) {
  if (!(p.beta1 > 0)) throw InvalidParameter("conditional_mtd: beta1 must be positive");
  if (w.size() != p.eta.size()) throw DomainError("covariate dimension does not match eta");
  Scalar lp = link_inv<Scalar>(theta) - p.beta0;
  for (Eigen::Index k = 0; k < w.size(); ++k) lp -= p.eta[k] * w[k];
  return lp / p.beta1;
}

/// Solves the defining identities
///   logit(rho1)  = b0 + b1 x_min    + e1 c1 + e2 z1
///   logit(rho2)  = b0 + b1 x_min    + e1 c2 + e2 z1
///   logit(theta) = b0 + b1 gamma_max + e1 c2 + e2 z1
///   logit(rho3)  = b0 + b1 x_min    + e1 c1 + e2 z2
/// in closed form. Without a group coding the last row and e2 are dropped.
template <typename Scalar>
BasicNaturalParams<Scalar> covariate_natural_params(const BasicCovariateState<Scalar>& cs,
                                                    const BasicDesignConstants<Scalar>& c,
                                                    const std::optional<BasicGroupCoding<Scalar>>& group = std::nullopt) {
  if (cs.gamma_max == c.x_min) throw DegenerateModel("covariate_natural_params: gamma_max equals x_min");
  if (!(cs.gamma_max > c.x_min && cs.gamma_max <= c.x_max))
    throw InvalidParameter("covariate_natural_params: gamma_max outside (x_min, x_max]");
  if (!(cs.c1 < cs.c2)) throw InvalidParameter("covariate_natural_params: need c1 < c2");
  if (!(cs.rho2 > 0 && cs.rho2 <= cs.rho1 && cs.rho1 < 1))
    throw InvalidParameter("covariate_natural_params: need 0 < rho2 <= rho1 < 1");
  if (!(cs.rho2 < c.theta)) throw InvalidParameter("covariate_natural_params: rho2 must be below theta");
  if (group.has_value() != cs.rho3.has_value())
    throw InvalidParameter("covariate_natural_params: rho3 and the group coding go together");

  const Scalar l1 = link_inv<Scalar>(cs.rho1);
  const Scalar l2 = link_inv<Scalar>(cs.rho2);
  const Scalar lt = link_inv<Scalar>(c.theta);

  BasicNaturalParams<Scalar> p;
  const Scalar eta1 = (l1 - l2) / (cs.c1 - cs.c2);
  p.beta1 = (lt - l2) / (cs.gamma_max - c.x_min);
  Scalar eta2 = 0;
  Scalar z1 = 0;
  if (group) {
    if (group->reference == group->alternate) throw InvalidParameter("group coding needs two distinct values");
    const Scalar l3 = link_inv<Scalar>(*cs.rho3);
    eta2 = (l3 - l1) / (group->alternate - group->reference);
    z1 = group->reference;
    p.eta.resize(2);
    p.eta << eta1, eta2;
  } else {
    p.eta.resize(1);
    p.eta << eta1;
  }
  p.beta0 = l2 - p.beta1 * c.x_min - eta1 * cs.c2 - eta2 * z1;
  return p;
}

}  // namespace ewoc

#endif  // EWOC_MODELS_HPP
