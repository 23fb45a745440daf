#pragma once

#include <cmath>
#include <limits>

#include "mediation/errors.hpp"
#include "mediation/numeric.hpp"

namespace mediation {

struct ProbitFit {
  Vector coefficients;
  DenseMatrix coefficient_covariance;  // inverse Fisher information
  double log_likelihood = 0.0;
  int iterations = 0;
};

namespace detail {

// log Phi(x), accurate in the lower tail.
inline double log_normal_cdf(double x) {
  return x > -5.0 ? std::log(normal_cdf(x)) : std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

inline double probit_log_likelihood(const DenseMatrix& x, const Vector& y, const Vector& beta) {
  const Vector eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += y(i) > 0.5 ? log_normal_cdf(eta(i)) : log_normal_cdf(-eta(i));
  }
  return ll;
}

}  // namespace detail

// Maximum-likelihood probit regression by Fisher scoring with step halving.
// Converges when the log-likelihood changes by less than 1e-8.
inline ProbitFit fit_probit(const DenseMatrix& x, const Vector& y, int max_iterations = 100) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (y.size() != n) throw InputError("fit_probit: row counts differ");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw InputError("fit_probit: response must be 0/1");
  }
  // Full column rank check reuses the OLS diagnostics.
  (void)ols(x, y);

  Vector beta = Vector::Zero(p);
  double ll = detail::probit_log_likelihood(x, y, beta);
  DenseMatrix info(p, p);
  for (int it = 1; it <= max_iterations; ++it) {
    const Vector eta = x * beta;
    Vector score = Vector::Zero(p);
    info.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = eta(i);
      const double phi = normal_pdf(e);
      const double cdf = normal_cdf(e);
      const double sf = normal_cdf(-e);
      // Generalized residual phi (y - Phi) / (Phi (1 - Phi)), written per
      // branch to stay finite in the tails.
      const double g = y(i) > 0.5 ? phi / std::max(cdf, 1e-300) : -phi / std::max(sf, 1e-300);
      const double w = phi * phi / std::max(cdf * sf, 1e-300);
      score += g * x.row(i).transpose();
      info.noalias() += w * x.row(i).transpose() * x.row(i);
    }
    Eigen::LDLT<DenseMatrix> ldlt(info);
    if (ldlt.info() != Eigen::Success) throw EstimationError("fit_probit: singular information");
    const Vector step = ldlt.solve(score);
    double scale = 1.0;
    Vector next = beta + step;
    double ll_next = detail::probit_log_likelihood(x, y, next);
    while (!(ll_next >= ll - 1e-12) && scale > 1e-6) {
      scale *= 0.5;
      next = beta + scale * step;
      ll_next = detail::probit_log_likelihood(x, y, next);
    }
    if (!std::isfinite(ll_next) || !next.allFinite()) {
      throw EstimationError("fit_probit: non-finite iterate (perfect separation?)");
    }
    const double change = std::abs(ll_next - ll);
    beta = next;
    ll = ll_next;
    if (change < 1e-8 && step.cwiseAbs().maxCoeff() < 1e-6) {
      // Information at the optimum.
      const Vector eta_hat = x * beta;
      info.setZero();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double e = eta_hat(i);
        const double phi = normal_pdf(e);
        const double w = phi * phi / std::max(normal_cdf(e) * normal_cdf(-e), 1e-300);
        info.noalias() += w * x.row(i).transpose() * x.row(i);
      }
      if (beta.cwiseAbs().maxCoeff() > 30.0) {
        throw EstimationError("fit_probit: coefficients diverging (perfect separation)");
      }
      ProbitFit fit;
      fit.coefficients = beta;
      fit.coefficient_covariance = info.ldlt().solve(DenseMatrix::Identity(p, p));
      fit.log_likelihood = ll;
      fit.iterations = it;
      return fit;
    }
  }
  throw EstimationError("fit_probit: no convergence (perfect separation?)");
}

}  // namespace mediation
