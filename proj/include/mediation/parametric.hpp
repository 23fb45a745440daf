#pragma once

// Linear structural equation model (LSEM) mediation: the total-effect,
// mediator and outcome regressions, product-of-coefficients ACME, natural
// direct and total effects with Delta/Goodman variances.

#include <cmath>
#include <string>
#include <string_view>

#include "mediation/data.hpp"
#include "mediation/errors.hpp"
#include "mediation/numeric.hpp"

namespace mediation {

enum class Quantity { acme_t0, acme_t1, nde_t0, nde_t1, total };
enum class Method { delta, goodman, bootstrap, cell };

inline std::string_view to_string(Quantity q) {
  switch (q) {
    case Quantity::acme_t0: return "acme_t0";
    case Quantity::acme_t1: return "acme_t1";
    case Quantity::nde_t0: return "nde_t0";
    case Quantity::nde_t1: return "nde_t1";
    case Quantity::total: return "total";
  }
  return "?";
}

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::delta: return "delta";
    case Method::goodman: return "goodman";
    case Method::bootstrap: return "bootstrap";
    case Method::cell: return "cell";
  }
  return "?";
}

inline Quantity acme_quantity(int t) { return t ? Quantity::acme_t1 : Quantity::acme_t0; }
inline Quantity nde_quantity(int t) { return t ? Quantity::nde_t1 : Quantity::nde_t0; }

struct EffectEstimate {
  Quantity quantity = Quantity::acme_t0;
  double point = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Method method = Method::delta;
  double level = 0.95;

  double se() const { return std::sqrt(variance); }
};

// Normal-theory interval point +- z * sqrt(variance).
inline EffectEstimate normal_estimate(Quantity q, double point, double variance, Method method,
                                      double level) {
  if (!(variance >= 0.0)) throw EstimationError("negative variance for " + std::string(to_string(q)));
  const double half = critical_value(level) * std::sqrt(variance);
  return {q, point, variance, point - half, point + half, method, level};
}

inline void check_treatment_arm(int t) {
  if (t != 0 && t != 1) throw InputError("treatment status must be 0 or 1");
}

// Fitted system. Coefficient order inside the covariance matrices:
//   total eq.     (alpha1, beta1, covariates...)
//   mediator eq.  (alpha2, beta2, covariates...)
//   outcome eq.   (alpha3, beta3, gamma, [kappa,] covariates...)
struct LsemFit {
  double alpha1 = 0, beta1 = 0;
  double alpha2 = 0, beta2 = 0;
  double alpha3 = 0, beta3 = 0, gamma = 0, kappa = 0;
  DenseMatrix cov_total_eq, cov_mediator_eq, cov_outcome_eq;
  double sigma1 = 0, sigma2 = 0, sigma3 = 0;
  double rho_tilde = 0;
  double r2_mediator = 0, r2_outcome = 0;
  bool includes_interaction = false;
  bool includes_covariates = false;
  Vector covariates_total, covariates_mediator, covariates_outcome;
  std::size_t n = 0;

  double var_beta1() const { return cov_total_eq(1, 1); }
  double var_alpha2() const { return cov_mediator_eq(0, 0); }
  double var_beta2() const { return cov_mediator_eq(1, 1); }
  double cov_alpha2_beta2() const { return cov_mediator_eq(0, 1); }
  double var_beta3() const { return cov_outcome_eq(1, 1); }
  double var_gamma() const { return cov_outcome_eq(2, 2); }
  double var_kappa() const { return includes_interaction ? cov_outcome_eq(3, 3) : 0.0; }
  double cov_gamma_kappa() const { return includes_interaction ? cov_outcome_eq(2, 3) : 0.0; }
  double cov_beta3_kappa() const { return includes_interaction ? cov_outcome_eq(1, 3) : 0.0; }
};

namespace lsem {

inline Vector treatment_vector(const Dataset& d) {
  Vector v(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) v(i) = d[i].treatment;
  return v;
}

inline Vector mediator_vector(const Dataset& d) {
  Vector v(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) v(i) = d[i].mediator;
  return v;
}

inline Vector outcome_vector(const Dataset& d) {
  Vector v(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) v(i) = d[i].outcome;
  return v;
}

// [1, T, X...]
inline DenseMatrix treatment_design(const Dataset& d, bool covariates) {
  const auto q = covariates ? d.num_covariates() : 0;
  DenseMatrix x(d.n(), 2 + q);
  for (std::size_t i = 0; i < d.n(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = d[i].treatment;
    for (std::size_t k = 0; k < q; ++k) x(i, 2 + k) = d[i].covariates[k];
  }
  return x;
}

// [1, T, M, (T*M), X...]
inline DenseMatrix outcome_design(const Dataset& d, bool interaction, bool covariates) {
  const auto q = covariates ? d.num_covariates() : 0;
  const auto base = interaction ? 4 : 3;
  DenseMatrix x(d.n(), base + q);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto& r = d[i];
    x(i, 0) = 1.0;
    x(i, 1) = r.treatment;
    x(i, 2) = r.mediator;
    if (interaction) x(i, 3) = r.treatment * r.mediator;
    for (std::size_t k = 0; k < q; ++k) x(i, base + k) = r.covariates[k];
  }
  return x;
}

}  // namespace lsem

// Fits Y~T, M~T and Y~T+M[+T*M], each optionally augmented by covariates.
inline LsemFit fit_lsem(const Dataset& data, bool include_interaction, bool include_covariates) {
  const auto q = include_covariates ? data.num_covariates() : 0;
  const std::size_t largest = (include_interaction ? 4 : 3) + q;
  if (data.n() <= largest) {
    throw EstimationError("fit_lsem: " + std::to_string(data.n()) +
                          " observations do not exceed the " + std::to_string(largest) +
                          " parameters of the outcome equation");
  }
  const Vector y = lsem::outcome_vector(data);
  const Vector m = lsem::mediator_vector(data);
  const DenseMatrix xt = lsem::treatment_design(data, include_covariates);

  OlsFit total, med, out;
  try {
    total = ols(xt, y);
    med = ols(xt, m);
  } catch (const EstimationError& e) {
    throw EstimationError(std::string("fit_lsem (treatment equations): ") + e.what());
  }
  try {
    out = ols(lsem::outcome_design(data, include_interaction, include_covariates), y);
  } catch (const EstimationError& e) {
    throw EstimationError(std::string("fit_lsem (outcome equation, check mediator variation): ") +
                          e.what());
  }

  LsemFit f;
  f.n = data.n();
  f.includes_interaction = include_interaction;
  f.includes_covariates = include_covariates && q > 0;
  f.alpha1 = total.coefficients(0);
  f.beta1 = total.coefficients(1);
  f.alpha2 = med.coefficients(0);
  f.beta2 = med.coefficients(1);
  f.alpha3 = out.coefficients(0);
  f.beta3 = out.coefficients(1);
  f.gamma = out.coefficients(2);
  f.kappa = include_interaction ? out.coefficients(3) : 0.0;
  f.cov_total_eq = total.coefficient_covariance;
  f.cov_mediator_eq = med.coefficient_covariance;
  f.cov_outcome_eq = out.coefficient_covariance;
  f.sigma1 = std::sqrt(total.residual_variance);
  f.sigma2 = std::sqrt(med.residual_variance);
  f.sigma3 = std::sqrt(out.residual_variance);
  f.r2_mediator = med.r_squared;
  f.r2_outcome = out.r_squared;
  const double s11 = total.residuals.squaredNorm();
  const double s22 = med.residuals.squaredNorm();
  const double s12 = total.residuals.dot(med.residuals);
  // Degenerate (noiseless) residuals leave the correlation undefined; report 0.
  f.rho_tilde = (s11 > 0.0 && s22 > 0.0) ? s12 / std::sqrt(s11 * s22) : 0.0;
  f.covariates_total = total.coefficients.tail(q);
  f.covariates_mediator = med.coefficients.tail(q);
  f.covariates_outcome = out.coefficients.tail(q);
  return f;
}

// Delta-method variance of beta2 (gamma + t kappa). Cross-equation
// covariances are zero because the equations are fitted separately.
inline double variance_delta(const LsemFit& fit, int t) {
  check_treatment_arm(t);
  const double tt = fit.includes_interaction ? t : 0.0;
  const double g = fit.gamma + tt * fit.kappa;
  const double v = g * g * fit.var_beta2() +
                   fit.beta2 * fit.beta2 *
                       (fit.var_gamma() + tt * fit.var_kappa() + 2.0 * tt * fit.cov_gamma_kappa());
  if (v < 0.0) throw EstimationError("variance_delta: negative variance from inconsistent inputs");
  return v;
}

// Goodman's exact variance of a product of independent estimates.
inline double variance_goodman(const LsemFit& fit) {
  if (fit.includes_interaction) {
    throw InputError("variance_goodman is defined only for the no-interaction model");
  }
  return variance_delta(fit, 0) + fit.var_gamma() * fit.var_beta2();
}

// beta2 (gamma + t kappa); without interaction t is irrelevant.
inline EffectEstimate acme_product(const LsemFit& fit, int t, Method method = Method::delta,
                                   double level = 0.95) {
  check_treatment_arm(t);
  const double tt = fit.includes_interaction ? t : 0.0;
  const double point = fit.beta2 * (fit.gamma + tt * fit.kappa);
  double var = 0.0;
  switch (method) {
    case Method::delta: var = variance_delta(fit, t); break;
    case Method::goodman: var = variance_goodman(fit); break;
    default: throw InputError("acme_product supports delta or goodman variances");
  }
  return normal_estimate(acme_quantity(t), point, var, method, level);
}

// beta3 + kappa (alpha2 + beta2 t).
inline EffectEstimate direct_effect(const LsemFit& fit, int t, double level = 0.95) {
  check_treatment_arm(t);
  if (!fit.includes_interaction) {
    return normal_estimate(nde_quantity(t), fit.beta3, fit.var_beta3(), Method::delta, level);
  }
  const double a = fit.alpha2 + t * fit.beta2;
  const double k = fit.kappa;
  const double point = fit.beta3 + k * a;
  const double var = fit.var_beta3() + a * a * fit.var_kappa() + 2.0 * a * fit.cov_beta3_kappa() +
                     k * k *
                         (fit.var_alpha2() + t * fit.var_beta2() + 2.0 * t * fit.cov_alpha2_beta2());
  if (var < 0.0) throw EstimationError("direct_effect: negative variance");
  return normal_estimate(nde_quantity(t), point, var, Method::delta, level);
}

// beta1 from the regression of Y on T.
inline EffectEstimate total_effect(const LsemFit& fit, double level = 0.95) {
  return normal_estimate(Quantity::total, fit.beta1, fit.var_beta1(), Method::delta, level);
}

// Two-sided Wald test of delta(1) - delta(0) = beta2 kappa = 0.
inline double test_no_interaction(const LsemFit& fit) {
  if (!fit.includes_interaction) {
    throw InputError("test_no_interaction requires a fit with the interaction term");
  }
  const double diff = fit.beta2 * fit.kappa;
  const double var = fit.beta2 * fit.beta2 * fit.var_kappa() + fit.kappa * fit.kappa * fit.var_beta2();
  if (diff == 0.0) return 1.0;
  if (!(var > 0.0)) return 0.0;
  const double z = std::abs(diff) / std::sqrt(var);
  return std::erfc(z / std::numbers::sqrt2);
}

}  // namespace mediation
