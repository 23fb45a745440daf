#pragma once

// Numerical primitives: normal distribution functions, QR least squares and
// two-equation feasible GLS with a fixed error correlation.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "mediation/errors.hpp"

namespace mediation {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InputError("normal_quantile: probability must lie strictly inside (0,1)");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

// Two-sided critical value z_{(1+level)/2}.
inline double critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0,1)");
  return normal_quantile(0.5 * (1.0 + level));
}

struct OlsFit {
  Vector coefficients;
  DenseMatrix coefficient_covariance;
  Vector residuals;
  double residual_variance = 0.0;  // SSR / (n - p)
  double r_squared = 0.0;
  Eigen::Index df = 0;             // n - p

  double se(Eigen::Index j) const { return std::sqrt(coefficient_covariance(j, j)); }
};

namespace detail {

inline void require_finite(const DenseMatrix& m, const char* what) {
  if (!m.allFinite()) throw InputError(std::string(what) + " contains non-finite entries");
}

// Index of the first column that is linearly dependent on the columns
// before it, or -1 when the design has full column rank.
inline Eigen::Index first_dependent_column(const DenseMatrix& x, double threshold) {
  for (Eigen::Index j = 1; j <= x.cols(); ++j) {
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(x.leftCols(j));
    qr.setThreshold(threshold);
    if (qr.rank() < j) return j - 1;
  }
  return -1;
}

inline constexpr double kRankThreshold = 1e-10;

}  // namespace detail

// Least squares via column-pivoted Householder QR.
inline OlsFit ols(const DenseMatrix& design, const Vector& response) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (response.size() != n) throw InputError("ols: design and response row counts differ");
  if (n < p) {
    throw EstimationError("ols: " + std::to_string(n) + " rows but " + std::to_string(p) +
                          " columns");
  }
  detail::require_finite(design, "ols design");
  detail::require_finite(response, "ols response");

  Eigen::ColPivHouseholderQR<DenseMatrix> qr(design);
  qr.setThreshold(detail::kRankThreshold);
  if (qr.rank() < p) {
    auto j = detail::first_dependent_column(design, detail::kRankThreshold);
    throw EstimationError("ols: rank-deficient design, column " + std::to_string(j) +
                          " is collinear with earlier columns");
  }

  OlsFit fit;
  fit.coefficients = qr.solve(response);
  fit.residuals = response - design * fit.coefficients;
  fit.df = n - p;
  const double ssr = fit.residuals.squaredNorm();
  fit.residual_variance = fit.df > 0 ? ssr / static_cast<double>(fit.df) : 0.0;

  // (X'X)^{-1} = P R^{-1} R^{-T} P'
  const DenseMatrix r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const DenseMatrix r_inv =
      r.triangularView<Eigen::Upper>().solve(DenseMatrix::Identity(p, p));
  const DenseMatrix xtx_inv_perm = r_inv * r_inv.transpose();
  const auto perm = qr.colsPermutation();
  DenseMatrix xtx_inv = perm * xtx_inv_perm * perm.transpose();
  xtx_inv = 0.5 * (xtx_inv + xtx_inv.transpose());
  fit.coefficient_covariance = fit.residual_variance * xtx_inv;

  const double mean = response.mean();
  const double sst = (response.array() - mean).square().sum();
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 0.0;
  return fit;
}

struct SurFit {
  Vector coefficients;  // mediator equation first, then outcome equation
  DenseMatrix coefficient_covariance;
  double sigma_mediator = 0.0;  // sd of the mediator-equation error
  double sigma_outcome = 0.0;   // sd of the outcome-equation error
  double fixed_rho = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::Index mediator_cols = 0;
};

struct SurOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
};

class SurConvergenceError : public EstimationError {
 public:
  SurConvergenceError(const std::string& what, SurFit last)
      : EstimationError(what), last_(std::move(last)) {}
  const SurFit& last_iterate() const { return last_; }

 private:
  SurFit last_;
};

// Iterated feasible GLS for the two-equation system
//   mediator = Xm bm + e2,   outcome = Xy by + e3,
// with Corr(e2, e3) held at `rho`. Each iteration re-estimates the error
// standard deviations equation by equation (divisor n - p_j) and solves GLS
// on the stacked system with unit-level covariance
// [[s2^2, rho s2 s3], [rho s2 s3, s3^2]].
inline SurFit sur_fixed_rho(const DenseMatrix& design_m, const Vector& mediator,
                            const DenseMatrix& design_y, const Vector& outcome, double rho,
                            const SurOptions& options = {}) {
  if (!(std::abs(rho) < 1.0)) throw InputError("sur_fixed_rho: |rho| must be < 1");
  const auto n = design_m.rows();
  if (design_y.rows() != n || mediator.size() != n || outcome.size() != n) {
    throw InputError("sur_fixed_rho: row counts differ");
  }
  const auto pm = design_m.cols();
  const auto py = design_y.cols();

  OlsFit om = ols(design_m, mediator);
  OlsFit oy = ols(design_y, outcome);
  if (om.df <= 0 || oy.df <= 0) throw EstimationError("sur_fixed_rho: no residual degrees of freedom");

  const DenseMatrix xmm = design_m.transpose() * design_m;
  const DenseMatrix xmy = design_m.transpose() * design_y;
  const DenseMatrix xyy = design_y.transpose() * design_y;
  const Vector xm_m = design_m.transpose() * mediator;
  const Vector xm_y = design_m.transpose() * outcome;
  const Vector xy_m = design_y.transpose() * mediator;
  const Vector xy_y = design_y.transpose() * outcome;

  Vector beta(pm + py);
  beta << om.coefficients, oy.coefficients;

  SurFit fit;
  fit.fixed_rho = rho;
  fit.mediator_cols = pm;

  for (int it = 1; it <= options.max_iterations; ++it) {
    const Vector e2 = mediator - design_m * beta.head(pm);
    const Vector e3 = outcome - design_y * beta.tail(py);
    const double s2 = std::sqrt(e2.squaredNorm() / static_cast<double>(n - pm));
    const double s3 = std::sqrt(e3.squaredNorm() / static_cast<double>(n - py));
    if (!(s2 > 0.0) || !(s3 > 0.0)) {
      throw EstimationError("sur_fixed_rho: zero residual variance in an equation");
    }
    // Inverse of the 2x2 error covariance.
    const double det = s2 * s2 * s3 * s3 * (1.0 - rho * rho);
    const double w22 = s3 * s3 / det;
    const double w33 = s2 * s2 / det;
    const double w23 = -rho * s2 * s3 / det;

    DenseMatrix a(pm + py, pm + py);
    a.topLeftCorner(pm, pm) = w22 * xmm;
    a.topRightCorner(pm, py) = w23 * xmy;
    a.bottomLeftCorner(py, pm) = w23 * xmy.transpose();
    a.bottomRightCorner(py, py) = w33 * xyy;
    Vector b(pm + py);
    b.head(pm) = w22 * xm_m + w23 * xm_y;
    b.tail(py) = w23 * xy_m + w33 * xy_y;

    Eigen::LDLT<DenseMatrix> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw EstimationError("sur_fixed_rho: singular GLS system");
    Vector next = ldlt.solve(b);
    if (!next.allFinite()) throw EstimationError("sur_fixed_rho: non-finite GLS solution");

    const double change = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    fit.coefficients = beta;
    fit.coefficient_covariance = ldlt.solve(DenseMatrix::Identity(pm + py, pm + py));
    fit.coefficient_covariance =
        0.5 * (fit.coefficient_covariance + fit.coefficient_covariance.transpose());
    fit.sigma_mediator = s2;
    fit.sigma_outcome = s3;
    fit.iterations = it;
    if (change < options.tolerance) {
      fit.converged = true;
      return fit;
    }
  }
  throw SurConvergenceError("sur_fixed_rho: no convergence in " +
                                std::to_string(options.max_iterations) + " iterations at rho=" +
                                std::to_string(rho),
                            fit);
}

// Sample variance with divisor n - 1.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

// Linear-interpolation quantile of sorted data (R type 7).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InputError("quantile of empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace mediation
