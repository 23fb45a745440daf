#pragma once

// Sensitivity of the LSEM ACME to correlation between the mediator- and
// outcome-equation errors, parametrized directly by that correlation or by
// the share of variance explained by an unobserved pre-treatment confounder.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mediation/data.hpp"
#include "mediation/errors.hpp"
#include "mediation/numeric.hpp"
#include "mediation/parametric.hpp"
#include "mediation/rng.hpp"

namespace mediation {

// ACME of the no-interaction LSEM when Corr(e2, e3) = rho:
//   (beta2 sigma1 / sigma2) { rho_tilde - rho sqrt((1 - rho_tilde^2) / (1 - rho^2)) }
inline double acme_given_rho(const LsemFit& fit, double rho) {
  if (!(std::abs(rho) < 1.0)) throw InputError("sensitivity parameter rho must lie in (-1, 1)");
  if (fit.includes_interaction) {
    throw InputError("the rho sensitivity analysis requires a fit without the interaction term");
  }
  if (!(fit.sigma2 > 0.0)) throw EstimationError("mediator equation has zero residual variance");
  const double rt = fit.rho_tilde;
  return fit.beta2 * fit.sigma1 / fit.sigma2 * (rt - rho * std::sqrt((1.0 - rt * rt) / (1.0 - rho * rho)));
}

struct RhoPoint {
  double rho = 0.0;
  double acme = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool converged = true;  // false when the SUR fit failed; se and CI are NaN then
};

struct SensitivityReport {
  std::vector<RhoPoint> curve;
  double zero_crossing_rho = 0.0;
  std::optional<std::pair<double, double>> ci_zero_band;
  double rho_tilde = 0.0;
  int sign_of_beta2 = 0;
  double level = 0.95;
  std::size_t failed_points = 0;
};

struct RhoSweepOptions {
  double level = 0.95;
  bool include_covariates = true;
  double band_tolerance = 1e-4;
  unsigned threads = 1;
  // Convergence of the FGLS iteration slows roughly like rho^2 per step, so
  // the sweep allows far more iterations than a single fit does.
  int sur_max_iterations = 5000;
};

// 199 equispaced values on [-0.99, 0.99].
inline std::vector<double> default_rho_grid(double lo = -0.99, double hi = 0.99, std::size_t count = 199) {
  if (count < 2 || !(lo < hi) || !(lo > -1.0) || !(hi < 1.0)) {
    throw InputError("rho grid must have >= 2 points inside (-1, 1)");
  }
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

namespace detail {

struct SurSystem {
  DenseMatrix design_m, design_y;
  Vector mediator, outcome;
};

inline SurSystem sur_system(const Dataset& data, bool covariates) {
  return {lsem::treatment_design(data, covariates), lsem::outcome_design(data, false, covariates),
          lsem::mediator_vector(data), lsem::outcome_vector(data)};
}

// Delta-method SE of beta2 * gamma from the SUR coefficient covariance,
// including the cross-equation covariance the GLS fit induces.
inline double sur_product_se(const SurSystem& sys, double rho, int max_iterations = 100) {
  SurOptions opt;
  opt.max_iterations = max_iterations;
  const auto fit = sur_fixed_rho(sys.design_m, sys.mediator, sys.design_y, sys.outcome, rho, opt);
  const auto ib = Eigen::Index{1};
  const auto ig = fit.mediator_cols + 2;
  const double b2 = fit.coefficients(ib);
  const double g = fit.coefficients(ig);
  const auto& v = fit.coefficient_covariance;
  const double var = g * g * v(ib, ib) + b2 * b2 * v(ig, ig) + 2.0 * b2 * g * v(ib, ig);
  return std::sqrt(std::max(var, 0.0));
}

}  // namespace detail

// Evaluates the ACME over `grid`, with SUR-based standard errors at each rho.
inline SensitivityReport rho_sweep(const Dataset& data, const std::vector<double>& grid,
                                   const RhoSweepOptions& options = {}) {
  if (grid.empty()) throw InputError("rho grid is empty");
  for (double r : grid) {
    if (!(std::abs(r) < 1.0)) throw InputError("rho grid values must lie in (-1, 1)");
  }
  const bool covs = options.include_covariates && data.num_covariates() > 0;
  const auto fit = fit_lsem(data, false, covs);
  const auto sys = detail::sur_system(data, covs);
  const double z = critical_value(options.level);
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  SensitivityReport rep;
  rep.level = options.level;
  rep.rho_tilde = fit.rho_tilde;
  rep.zero_crossing_rho = fit.rho_tilde;
  rep.sign_of_beta2 = (fit.beta2 > 0) - (fit.beta2 < 0);
  rep.curve.resize(grid.size());

  parallel_for(grid.size(), options.threads, [&](std::size_t i) {
    RhoPoint p;
    p.rho = grid[i];
    p.acme = acme_given_rho(fit, p.rho);
    try {
      p.se = detail::sur_product_se(sys, p.rho, options.sur_max_iterations);
      p.ci_low = p.acme - z * p.se;
      p.ci_high = p.acme + z * p.se;
    } catch (const EstimationError&) {
      p.converged = false;
      p.se = p.ci_low = p.ci_high = nan;
    }
    rep.curve[i] = p;
  });
  for (const auto& p : rep.curve) rep.failed_points += !p.converged;
  if (rep.failed_points == rep.curve.size()) {
    throw EstimationError("SUR estimation failed at every rho in the grid");
  }

  // Band of rho where the CI covers zero, searched within the grid range.
  // Points where the SUR fit fails are treated as not covering.
  auto covers = [&](double r) {
    const double a = acme_given_rho(fit, r);
    try {
      const double h = z * detail::sur_product_se(sys, r, options.sur_max_iterations);
      return a - h <= 0.0 && 0.0 <= a + h;
    } catch (const EstimationError&) {
      return false;
    }
  };
  const auto [lo_it, hi_it] = std::minmax_element(grid.begin(), grid.end());
  const double lo = *lo_it, hi = *hi_it;
  const double centre = std::clamp(fit.rho_tilde, lo, hi);
  if (covers(centre)) {
    auto edge = [&](double inside, double outside) {
      if (covers(outside)) return outside;
      while (std::abs(outside - inside) > options.band_tolerance) {
        const double mid = 0.5 * (inside + outside);
        (covers(mid) ? inside : outside) = mid;
      }
      return inside;
    };
    rep.ci_zero_band = std::make_pair(edge(centre, lo), edge(centre, hi));
  }
  return rep;
}

enum class R2Kind { unexplained, original };

inline std::string_view to_string(R2Kind k) {
  return k == R2Kind::unexplained ? "unexplained" : "original";
}

// Correlation implied by confounder R^2 values:
//   unexplained: rho = sign * R*_M R*_Y
//   original:    rho = sign * R~_M R~_Y / sqrt((1 - R2_M)(1 - R2_Y))
// with R*, R~ the nonnegative square roots.
inline double rho_from_r2(R2Kind kind, double mediator_r2, double outcome_r2, int sign,
                          const LsemFit& fit) {
  if (sign != 1 && sign != -1) throw InputError("sign must be +1 or -1");
  if (!(mediator_r2 >= 0.0 && mediator_r2 < 1.0) || !(outcome_r2 >= 0.0 && outcome_r2 < 1.0)) {
    throw InputError("R^2 values must lie in [0, 1)");
  }
  double rho = 0.0;
  if (kind == R2Kind::unexplained) {
    rho = sign * std::sqrt(mediator_r2) * std::sqrt(outcome_r2);
  } else {
    const double bound_m = 1.0 - fit.r2_mediator;
    const double bound_y = 1.0 - fit.r2_outcome;
    if (mediator_r2 > bound_m) {
      throw InputError("mediator R~^2 exceeds its bound var(e2)/var(M) = " + csv::format_number(bound_m));
    }
    if (outcome_r2 > bound_y) {
      throw InputError("outcome R~^2 exceeds its bound var(e3)/var(Y) = " + csv::format_number(bound_y));
    }
    rho = sign * std::sqrt(mediator_r2) * std::sqrt(outcome_r2) / std::sqrt(bound_m * bound_y);
  }
  if (!(std::abs(rho) < 1.0)) throw InputError("implied |rho| >= 1");
  return rho;
}

struct R2Grid {
  R2Kind kind = R2Kind::unexplained;
  int sign = 1;
  std::vector<double> mediator_axis;
  std::vector<double> outcome_axis;
  // values[i][j] at (mediator_axis[i], outcome_axis[j]); NaN where infeasible.
  std::vector<std::vector<double>> values;
  std::vector<std::vector<bool>> feasible;
};

// Axis values i / resolution for i = 0..resolution-1.
inline std::vector<double> r2_axis(std::size_t resolution) {
  std::vector<double> axis(resolution);
  for (std::size_t i = 0; i < resolution; ++i) {
    axis[i] = static_cast<double>(i) / static_cast<double>(resolution);
  }
  return axis;
}

inline R2Grid r2_grid(const LsemFit& fit, R2Kind kind, int sign, std::size_t resolution) {
  if (resolution < 2) throw InputError("grid resolution must be at least 2");
  R2Grid g;
  g.kind = kind;
  g.sign = sign;
  g.mediator_axis = r2_axis(resolution);
  g.outcome_axis = g.mediator_axis;
  g.values.assign(resolution, std::vector<double>(resolution, std::numeric_limits<double>::quiet_NaN()));
  g.feasible.assign(resolution, std::vector<bool>(resolution, false));
  for (std::size_t i = 0; i < resolution; ++i) {
    for (std::size_t j = 0; j < resolution; ++j) {
      try {
        const double rho = rho_from_r2(kind, g.mediator_axis[i], g.outcome_axis[j], sign, fit);
        g.values[i][j] = acme_given_rho(fit, rho);
        g.feasible[i][j] = true;
      } catch (const InputError&) {
        // masked cell
      }
    }
  }
  return g;
}

// One grid per sign of the confounder's effects: {+1, -1}.
inline std::pair<R2Grid, R2Grid> r2_contours(const LsemFit& fit, R2Kind kind, std::size_t resolution) {
  return {r2_grid(fit, kind, +1, resolution), r2_grid(fit, kind, -1, resolution)};
}

inline std::pair<R2Grid, R2Grid> r2_contours(const Dataset& data, R2Kind kind, std::size_t resolution,
                                             bool include_covariates = true) {
  const bool covs = include_covariates && data.num_covariates() > 0;
  return r2_contours(fit_lsem(data, false, covs), kind, resolution);
}

struct R2Summary {
  int sign = 1;
  std::size_t feasible_cells = 0;
  std::size_t same_sign_cells = 0;  // cells whose ACME has the sign of the rho = 0 estimate
  double min_acme = 0.0;
  double max_acme = 0.0;
  bool sign_robust = false;  // every feasible cell keeps the rho = 0 sign
};

inline R2Summary summarize(const R2Grid& g, double rho0_acme) {
  R2Summary s;
  s.sign = g.sign;
  s.min_acme = std::numeric_limits<double>::infinity();
  s.max_acme = -std::numeric_limits<double>::infinity();
  const int ref = (rho0_acme > 0) - (rho0_acme < 0);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    for (std::size_t j = 0; j < g.values[i].size(); ++j) {
      if (!g.feasible[i][j]) continue;
      const double v = g.values[i][j];
      ++s.feasible_cells;
      s.same_sign_cells += ((v > 0) - (v < 0)) == ref;
      s.min_acme = std::min(s.min_acme, v);
      s.max_acme = std::max(s.max_acme, v);
    }
  }
  s.sign_robust = s.feasible_cells > 0 && s.same_sign_cells == s.feasible_cells;
  return s;
}

}  // namespace mediation
