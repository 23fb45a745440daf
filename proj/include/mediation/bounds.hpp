#pragma once

// Sharp bounds on the ACME for a binary mediator and binary outcome, with no
// assumption on mediator ignorability (closed form) and under a bounded
// violation upsilon (linear program over the 64 principal strata).
//
// A principal stratum is the tuple (y11, y10, y01, y00, m1, m0), where
// y_tm = Y(t, m) and m_t = M(t). Its index packs the tuple as the bits
//   y11 y10 y01 y00 m1 m0   (most significant first).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mediation/data.hpp"
#include "mediation/errors.hpp"
#include "mediation/parametric.hpp"
#include "mediation/rng.hpp"
#include "mediation/simplex.hpp"

namespace mediation {

inline constexpr int kNumStrata = 64;

namespace strata {

// Y(t, m) of stratum k.
constexpr int y(int k, int t, int m) { return (k >> (2 + 2 * t + m)) & 1; }
// M(t) of stratum k.
constexpr int m(int k, int t) { return (k >> t) & 1; }
// The 4-bit potential-outcome pattern (y11 y10 y01 y00) of stratum k.
constexpr int outcome_pattern(int k) { return k >> 2; }

}  // namespace strata

// P_ymt = Pr(Y = y, M = m | T = t), stored as p[y][m][t].
struct CellProbs {
  std::array<std::array<std::array<double, 2>, 2>, 2> p{};

  double operator()(int y, int m, int t) const { return p[y][m][t]; }
  double& operator()(int y, int m, int t) { return p[y][m][t]; }

  // Pr(M = m | T = t).
  double mediator_margin(int m, int t) const { return p[0][m][t] + p[1][m][t]; }

  void validate(double tol = 1e-12) const {
    for (int t = 0; t < 2; ++t) {
      double s = 0.0;
      for (int y = 0; y < 2; ++y) {
        for (int m = 0; m < 2; ++m) {
          if (!(p[y][m][t] >= 0.0)) throw InputError("cell probabilities must be nonnegative");
          s += p[y][m][t];
        }
      }
      if (std::abs(s - 1.0) > tol) {
        throw InputError("cell probabilities in arm " + std::to_string(t) + " do not sum to 1");
      }
    }
  }
};

// Within-arm joint frequencies of (Y, M); both must be 0/1.
inline CellProbs cell_probs(const Dataset& data) {
  if (!has_binary_mediator(data)) throw InputError("bounds require a binary (0/1) mediator");
  if (!has_binary_outcome(data)) throw InputError("bounds require a binary (0/1) outcome");
  std::array<std::array<std::array<std::size_t, 2>, 2>, 2> count{};
  std::array<std::size_t, 2> arm{};
  for (const auto& r : data.records()) {
    count[static_cast<int>(r.outcome)][static_cast<int>(r.mediator)][r.treatment] += 1;
    arm[r.treatment] += 1;
  }
  CellProbs c;
  for (int t = 0; t < 2; ++t) {
    if (arm[t] == 0) throw EstimationError("treatment arm " + std::to_string(t) + " is empty");
    for (int y = 0; y < 2; ++y) {
      for (int m = 0; m < 2; ++m) {
        c(y, m, t) = static_cast<double>(count[y][m][t]) / static_cast<double>(arm[t]);
      }
    }
  }
  return c;
}

// Plug-in ACME for binary M and Y: (nu_11 - nu_01)(mu_t1 - mu_t0).
inline double plugin_from_probs(const CellProbs& c, int t) {
  check_treatment_arm(t);
  const double d1 = c.mediator_margin(1, t), d0 = c.mediator_margin(0, t);
  if (!(d1 > 0.0) || !(d0 > 0.0)) {
    throw EstimationError("plug-in ACME undefined: a mediator level is unobserved in arm " + std::to_string(t));
  }
  const double mu1 = c(1, 1, t) / d1;
  const double mu0 = c(1, 0, t) / d0;
  return (c.mediator_margin(1, 1) - c.mediator_margin(1, 0)) * (mu1 - mu0);
}

// No-assumption sharp bounds (closed form).
inline std::pair<double, double> sjolander_bounds(const CellProbs& P, int t) {
  check_treatment_arm(t);
  auto p = [&](int y, int m, int tt) { return P(y, m, tt); };
  if (t == 1) {
    const double lo = std::max({-p(0, 0, 1) - p(0, 1, 1),
                                -p(0, 0, 0) - p(0, 0, 1) - p(1, 0, 0),
                                -p(0, 1, 1) - p(0, 1, 0) - p(1, 1, 0)});
    const double hi = std::min({p(1, 0, 1) + p(1, 1, 1),
                                p(0, 0, 0) + p(1, 0, 0) + p(1, 0, 1),
                                p(0, 1, 0) + p(1, 1, 0) + p(1, 1, 1)});
    return {lo, hi};
  }
  const double lo = std::max({-p(1, 0, 0) - p(1, 1, 0),
                              -p(0, 0, 1) - p(1, 0, 0) - p(1, 0, 1),
                              -p(1, 1, 0) - p(0, 1, 1) - p(1, 1, 1)});
  const double hi = std::min({p(0, 0, 0) + p(0, 1, 0),
                              p(0, 1, 0) + p(0, 1, 1) + p(1, 1, 1),
                              p(0, 0, 0) + p(0, 0, 1) + p(1, 0, 1)});
  return {lo, hi};
}

inline constexpr int kObservationRows = 8;
inline constexpr int kUpsilonRows = 64;

// Builds the bounding program over the 64 stratum proportions pi:
//   objective   sum_k pi_k (Y(t, M(1)) - Y(t, M(0)))   (coefficients in {-1, 0, 1})
//   equalities  sum of pi over strata with M(t) = m, Y(t, m) = y equals P_ymt
//               (rows ordered t, m, y), then sum pi = 1
//   upsilon     for each arm t' and outcome pattern w:
//                 | A_w / d1 - B_w / d0 | <= upsilon,
//               A_w = sum pi over pattern w with M(t') = 1, B_w likewise with
//               M(t') = 0, d_m = Pr(M = m | T = t'). Multiplying through by
//               d1 d0 > 0 gives the two linear rows
//                 d0 A_w - d1 B_w <= upsilon d1 d0,  d1 B_w - d0 A_w <= upsilon d1 d0.
inline LpProblem build_lp(const CellProbs& probs, double upsilon, int t, Direction direction) {
  check_treatment_arm(t);
  if (!(upsilon >= 0.0 && upsilon <= 1.0)) throw InputError("upsilon must lie in [0, 1]");
  probs.validate(1e-9);
  for (int tp = 0; tp < 2; ++tp) {
    for (int mm = 0; mm < 2; ++mm) {
      if (!(probs.mediator_margin(mm, tp) > 0.0)) {
        throw EstimationError("upsilon constraint undefined: no units with M=" + std::to_string(mm) +
                              " in arm " + std::to_string(tp));
      }
    }
  }

  LpProblem lp;
  lp.direction = direction;
  lp.objective = Vector::Zero(kNumStrata);
  for (int k = 0; k < kNumStrata; ++k) {
    lp.objective(k) = strata::y(k, t, strata::m(k, 1)) - strata::y(k, t, strata::m(k, 0));
  }

  lp.eq = DenseMatrix::Zero(kObservationRows + 1, kNumStrata);
  lp.eq_rhs = Vector::Zero(kObservationRows + 1);
  int row = 0;
  for (int tt = 0; tt < 2; ++tt) {
    for (int mm = 0; mm < 2; ++mm) {
      for (int yy = 0; yy < 2; ++yy, ++row) {
        for (int k = 0; k < kNumStrata; ++k) {
          if (strata::m(k, tt) == mm && strata::y(k, tt, mm) == yy) lp.eq(row, k) = 1.0;
        }
        lp.eq_rhs(row) = probs(yy, mm, tt);
      }
    }
  }
  lp.eq.row(kObservationRows).setOnes();
  lp.eq_rhs(kObservationRows) = 1.0;

  lp.ub = DenseMatrix::Zero(kUpsilonRows, kNumStrata);
  lp.ub_rhs = Vector::Zero(kUpsilonRows);
  row = 0;
  for (int tp = 1; tp >= 0; --tp) {
    const double d1 = probs.mediator_margin(1, tp);
    const double d0 = probs.mediator_margin(0, tp);
    for (int w = 0; w < 16; ++w) {
      for (int k = 0; k < kNumStrata; ++k) {
        if (strata::outcome_pattern(k) != w) continue;
        const double coef = strata::m(k, tp) == 1 ? d0 : -d1;
        lp.ub(row, k) = coef;
        lp.ub(row + 1, k) = -coef;
      }
      lp.ub_rhs(row) = lp.ub_rhs(row + 1) = upsilon * d1 * d0;
      row += 2;
    }
  }
  return lp;
}

using StrataVector = Vector;

// P implied by a stratum distribution; the inverse direction of the
// observation equalities.
inline CellProbs probs_from_strata(const StrataVector& pi) {
  CellProbs c;
  for (int k = 0; k < kNumStrata; ++k) {
    for (int t = 0; t < 2; ++t) {
      const int mm = strata::m(k, t);
      c(strata::y(k, t, mm), mm, t) += pi(k);
    }
  }
  return c;
}

struct BoundsResult {
  int t = 0;
  double upsilon = 0.0;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  LpStatus lp_status = LpStatus::infeasible;
  StrataVector argmin, argmax;
  double max_residual = 0.0;
};

inline BoundsResult acme_bounds(const CellProbs& probs, double upsilon, int t) {
  BoundsResult r;
  r.t = t;
  r.upsilon = upsilon;
  const auto lo = simplex_solve(build_lp(probs, upsilon, t, Direction::minimize));
  const auto hi = simplex_solve(build_lp(probs, upsilon, t, Direction::maximize));
  if (lo.status != LpStatus::optimal || hi.status != LpStatus::optimal) {
    r.lp_status = LpStatus::infeasible;
    return r;
  }
  r.lp_status = LpStatus::optimal;
  r.lower = lo.value;
  r.upper = hi.value;
  r.argmin = lo.x;
  r.argmax = hi.x;
  r.max_residual = std::max(lo.max_residual, hi.max_residual);
  return r;
}

struct UpsilonSweep {
  std::vector<BoundsResult> bounds;
  // First upsilon at which the bound nearer zero reaches zero; empty when
  // the interval excludes zero over the whole grid.
  std::optional<double> crossing_upsilon;
};

inline UpsilonSweep upsilon_sweep(const CellProbs& probs, const std::vector<double>& grid, int t,
                                  unsigned threads = 1, double tolerance = 1e-4) {
  if (grid.empty()) throw InputError("upsilon grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw InputError("upsilon grid must be sorted ascending");
  UpsilonSweep sweep;
  sweep.bounds.resize(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) { sweep.bounds[i] = acme_bounds(probs, grid[i], t); });
  for (const auto& b : sweep.bounds) {
    if (b.lp_status != LpStatus::optimal) {
      throw EstimationError("bounds LP infeasible at upsilon=" + csv::format_number(b.upsilon) +
                            ": cell probabilities are internally inconsistent");
    }
  }

  // Track whichever bound starts on the far side of zero.
  const auto& first = sweep.bounds.front();
  const bool track_lower = first.lower > 0.0;
  const bool track_upper = first.upper < 0.0;
  if (!track_lower && !track_upper) {
    sweep.crossing_upsilon = grid.front();
    return sweep;
  }
  auto reached = [&](const BoundsResult& b) { return track_lower ? b.lower <= 0.0 : b.upper >= 0.0; };
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!reached(sweep.bounds[i])) continue;
    double below = grid[i - 1], above = grid[i];
    while (above - below > tolerance) {
      const double mid = 0.5 * (below + above);
      (reached(acme_bounds(probs, mid, t)) ? above : below) = mid;
    }
    sweep.crossing_upsilon = above;
    break;
  }
  return sweep;
}

// 0, 1/(count-1), ..., 1.
inline std::vector<double> default_upsilon_grid(std::size_t count = 21) {
  if (count < 2) throw InputError("upsilon grid needs at least two points");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) g[i] = static_cast<double>(i) / static_cast<double>(count - 1);
  return g;
}

}  // namespace mediation
