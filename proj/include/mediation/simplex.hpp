#pragma once

// Dense two-phase primal simplex with Bland's rule, sized for the small
// bounding programs in bounds.hpp. Tableau form; redundant equality rows are
// detected and dropped at the end of phase 1, and the final basis is
// re-solved against the original rows.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mediation/errors.hpp"
#include "mediation/numeric.hpp"

namespace mediation {

enum class Direction { minimize, maximize };
enum class LpStatus { optimal, infeasible };

inline std::string_view to_string(LpStatus s) { return s == LpStatus::optimal ? "optimal" : "infeasible"; }

// optimize objective . x  s.t.  eq x = eq_rhs,  ub x <= ub_rhs,  x >= 0
struct LpProblem {
  Vector objective;
  DenseMatrix eq;
  Vector eq_rhs;
  DenseMatrix ub;
  Vector ub_rhs;
  Direction direction = Direction::minimize;

  Eigen::Index num_vars() const { return objective.size(); }
};

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  double value = std::numeric_limits<double>::quiet_NaN();
  Vector x;
  double max_residual = 0.0;  // worst violation of the original constraints
  int iterations = 0;
};

struct SimplexOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  int max_iterations = 100000;
};

namespace detail {

class Tableau {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tableau(const LpProblem& p, const SimplexOptions& opt) : opt_(opt) {
    const auto n = p.num_vars();
    const auto me = p.eq.rows();
    const auto mu = p.ub.rows();
    if ((me && p.eq.cols() != n) || (mu && p.ub.cols() != n) || p.eq_rhs.size() != me ||
        p.ub_rhs.size() != mu) {
      throw InputError("simplex: inconsistent problem dimensions");
    }
    if (!p.objective.allFinite() || !p.eq.allFinite() || !p.ub.allFinite() ||
        !p.eq_rhs.allFinite() || !p.ub_rhs.allFinite()) {
      throw InputError("simplex: non-finite problem data");
    }
    n_struct_ = n;
    m_ = me + mu;
    // Artificials are needed for equality rows and for <= rows with negative
    // right-hand side (whose slack enters with coefficient -1 after sign flip).
    Eigen::Index n_art = me;
    for (Eigen::Index i = 0; i < mu; ++i) n_art += p.ub_rhs(i) < 0.0;
    art_begin_ = n + mu;
    cols_ = art_begin_ + n_art;
    orig_ = Matrix::Zero(m_, cols_ + 1);
    basis_.assign(static_cast<std::size_t>(m_), -1);
    rows_.resize(static_cast<std::size_t>(m_));
    for (Eigen::Index i = 0; i < m_; ++i) rows_[static_cast<std::size_t>(i)] = i;

    Eigen::Index art = art_begin_;
    for (Eigen::Index i = 0; i < me; ++i) {
      const double s = p.eq_rhs(i) < 0.0 ? -1.0 : 1.0;
      orig_.row(i).head(n) = s * p.eq.row(i);
      orig_(i, cols_) = s * p.eq_rhs(i);
      equilibrate(i);
      orig_(i, art) = 1.0;
      basis_[static_cast<std::size_t>(i)] = art++;
    }
    for (Eigen::Index k = 0; k < mu; ++k) {
      const auto i = me + k;
      const double s = p.ub_rhs(k) < 0.0 ? -1.0 : 1.0;
      orig_.row(i).head(n) = s * p.ub.row(k);
      orig_(i, n + k) = s;
      orig_(i, cols_) = s * p.ub_rhs(k);
      equilibrate(i);
      if (s > 0) {
        basis_[static_cast<std::size_t>(i)] = n + k;
      } else {
        orig_(i, art) = 1.0;
        basis_[static_cast<std::size_t>(i)] = art++;
      }
    }
    // the starting basis is diagonal, so the tableau is the scaled rows
    t_ = Matrix::Zero(m_ + 1, cols_ + 1);
    for (Eigen::Index i = 0; i < m_; ++i) {
      t_.row(i) = orig_.row(i) / orig_(i, basis_[static_cast<std::size_t>(i)]);
    }
    cost_ = Vector::Zero(cols_);
  }

  // Returns false when the constraints are infeasible.
  bool phase_one() {
    cost_.setZero();
    cost_.tail(cols_ - art_begin_).setOnes();
    price();
    run(cols_);
    if (-t_(m_, cols_) > opt_.feasibility_tol) return false;

    // Pivot remaining (zero-level) artificials out of the basis; rows with no
    // usable pivot are linearly redundant and are removed.
    for (Eigen::Index i = 0; i < m_;) {
      if (!is_artificial(basis_[static_cast<std::size_t>(i)])) {
        ++i;
        continue;
      }
      Eigen::Index best = -1;
      double best_abs = opt_.pivot_tol;
      for (Eigen::Index j = 0; j < art_begin_; ++j) {
        if (std::abs(t_(i, j)) > best_abs) {
          best_abs = std::abs(t_(i, j));
          best = j;
        }
      }
      if (best >= 0) {
        pivot(i, best);
        ++i;
      } else {
        remove_row(i);
      }
    }
    return true;
  }

  void phase_two(const Vector& cost) {
    cost_.setZero();
    cost_.head(n_struct_) = cost;
    price();
    run(art_begin_);
  }

  Vector solution() const {
    Vector x = Vector::Zero(n_struct_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      const auto b = basis_[static_cast<std::size_t>(i)];
      if (b < n_struct_) x(b) = std::max(0.0, t_(i, cols_));
    }
    return x;
  }

  int iterations() const { return iterations_; }
  const std::vector<Eigen::Index>& basis() const { return basis_; }

 private:
  static constexpr int kReinvertEvery = 500;
  static constexpr int kDegenerateLimit = 50;

  bool is_artificial(Eigen::Index j) const { return j >= art_begin_; }

  // Scales row i of the original system so its largest structural or slack
  // coefficient is 1.
  void equilibrate(Eigen::Index i) {
    const double big = orig_.row(i).head(art_begin_).cwiseAbs().maxCoeff();
    if (big > 0.0) orig_.row(i) /= big;
  }

  // Rebuilds the tableau as B^-1 [A | b] from the original rows, discarding
  // the rounding accumulated by pivots. Skipped if B looks singular.
  void reinvert() {
    Matrix a(m_, cols_ + 1);
    for (Eigen::Index i = 0; i < m_; ++i) a.row(i) = orig_.row(rows_[static_cast<std::size_t>(i)]);
    DenseMatrix b(m_, m_);
    for (Eigen::Index j = 0; j < m_; ++j) b.col(j) = a.col(basis_[static_cast<std::size_t>(j)]);
    Eigen::PartialPivLU<DenseMatrix> lu(b);
    if (!(lu.rcond() > 1e-13)) return;
    t_.topRows(m_) = lu.solve(DenseMatrix(a));
    for (Eigen::Index i = 0; i < m_; ++i) {
      t_.row(i)(basis_[static_cast<std::size_t>(i)]) = 1.0;
      if (std::abs(t_(i, cols_)) < 1e-14) t_(i, cols_) = 0.0;
    }
    price();
    since_reinvert_ = 0;
  }

  // Objective row c - c_B B^-1 A from the current tableau rows.
  void price() {
    t_.row(m_).setZero();
    t_.row(m_).head(cols_) = cost_.transpose();
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double cb = cost_(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) t_.row(m_) -= cb * t_.row(i);
    }
    for (Eigen::Index i = 0; i < m_; ++i) t_(m_, basis_[static_cast<std::size_t>(i)]) = 0.0;
  }

  // Cheap check of an apparent optimum against the original rows: basic
  // values and reduced costs from one factorization of B.
  bool confirmed(Eigen::Index allowed_cols) const {
    DenseMatrix a(m_, cols_ + 1);
    for (Eigen::Index i = 0; i < m_; ++i) a.row(i) = orig_.row(rows_[static_cast<std::size_t>(i)]);
    DenseMatrix b(m_, m_);
    Vector cb(m_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const auto k = basis_[static_cast<std::size_t>(j)];
      b.col(j) = a.col(k);
      cb(j) = cost_(k);
    }
    Eigen::PartialPivLU<DenseMatrix> lu(b);
    if (!(lu.rcond() > 1e-13)) return false;
    const Vector xb = lu.solve(a.col(cols_));
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (std::abs(xb(i) - t_(i, cols_)) > 1e-9 || xb(i) < -opt_.feasibility_tol) return false;
    }
    const Vector y = lu.transpose().solve(cb);
    const Vector reduced = cost_.head(allowed_cols) - a.leftCols(allowed_cols).transpose() * y;
    return reduced.minCoeff() >= -opt_.optimality_tol;
  }

  Eigen::Index entering(Eigen::Index allowed_cols) const {
    for (Eigen::Index j = 0; j < allowed_cols; ++j) {
      if (t_(m_, j) < -opt_.optimality_tol) return j;
    }
    return -1;
  }

  // Lowest-index improving column enters. The leaving row is the largest
  // pivot among rows whose ratio is within tolerance of the minimum (Harris);
  // after a long run of degenerate pivots it reverts to Bland's lowest-index
  // rule, which cannot cycle.
  void run(Eigen::Index allowed_cols) {
    int degenerate = 0;
    while (true) {
      Eigen::Index enter = entering(allowed_cols);
      if (enter < 0 && since_reinvert_ > 0 && !confirmed(allowed_cols)) {
        reinvert();
        enter = entering(allowed_cols);
      }
      if (enter < 0) return;

      double min_ratio = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double a = t_(i, enter);
        if (a > opt_.pivot_tol) min_ratio = std::min(min_ratio, (std::max(0.0, t_(i, cols_)) + 1e-12) / a);
      }
      const bool bland = degenerate >= kDegenerateLimit;
      Eigen::Index leave = -1;
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double a = t_(i, enter);
        if (a <= opt_.pivot_tol || std::max(0.0, t_(i, cols_)) / a > min_ratio) continue;
        if (leave < 0) {
          leave = i;
        } else if (bland) {
          if (basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) leave = i;
        } else if (a > t_(leave, enter)) {
          leave = i;
        }
      }
      if (leave < 0) throw EstimationError("simplex: unbounded objective (internal error)");
      degenerate = t_(leave, cols_) <= 1e-12 ? degenerate + 1 : 0;
      pivot(leave, enter);
      if (since_reinvert_ >= kReinvertEvery) reinvert();
      if (++iterations_ > opt_.max_iterations) throw EstimationError("simplex: iteration limit reached");
    }
  }

  void pivot(Eigen::Index r, Eigen::Index c) {
    t_.row(r) /= t_(r, c);
    t_(r, c) = 1.0;
    for (Eigen::Index i = 0; i <= m_; ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f == 0.0) continue;
      t_.row(i) -= f * t_.row(r);
      t_(i, c) = 0.0;
    }
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (std::abs(t_(i, cols_)) < 1e-14) t_(i, cols_) = 0.0;
    }
    basis_[static_cast<std::size_t>(r)] = c;
    ++since_reinvert_;
  }

  void remove_row(Eigen::Index r) {
    // Move the objective row and the rows below up by one.
    for (Eigen::Index i = r; i < m_; ++i) t_.row(i) = t_.row(i + 1);
    t_.conservativeResize(m_, Eigen::NoChange);
    basis_.erase(basis_.begin() + r);
    rows_.erase(rows_.begin() + r);
    --m_;
  }

  SimplexOptions opt_;
  Matrix orig_;  // sign-normalized, equilibrated [A | b] of every original row
  Matrix t_;
  Vector cost_;
  std::vector<Eigen::Index> basis_;
  std::vector<Eigen::Index> rows_;  // original row of each tableau row
  Eigen::Index n_struct_ = 0;
  Eigen::Index m_ = 0;
  Eigen::Index art_begin_ = 0;
  Eigen::Index cols_ = 0;
  int iterations_ = 0;
  int since_reinvert_ = 0;
};

}  // namespace detail

inline double constraint_violation(const LpProblem& p, const Vector& x) {
  double worst = 0.0;
  if (p.eq.rows()) worst = std::max(worst, (p.eq * x - p.eq_rhs).cwiseAbs().maxCoeff());
  if (p.ub.rows()) worst = std::max(worst, (p.ub * x - p.ub_rhs).maxCoeff());
  if (x.size()) worst = std::max(worst, (-x).maxCoeff());
  return std::max(worst, 0.0);
}

namespace detail {

// Basic variables recomputed from the original rows for the final basis,
// which undoes the drift of many tableau updates. Falls back to the tableau
// values if the basis system does not reproduce a feasible point.
inline Vector refine_basic_solution(const LpProblem& p, const std::vector<Eigen::Index>& basis, Vector x) {
  const auto n = p.num_vars();
  const auto me = p.eq.rows();
  const auto mu = p.ub.rows();
  DenseMatrix a = DenseMatrix::Zero(me + mu, n + mu);
  a.topLeftCorner(me, n) = p.eq;
  a.bottomLeftCorner(mu, n) = p.ub;
  a.bottomRightCorner(mu, mu).setIdentity();
  Vector b(me + mu);
  b << p.eq_rhs, p.ub_rhs;

  DenseMatrix ab(me + mu, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) ab.col(static_cast<Eigen::Index>(j)) = a.col(basis[j]);
  const Vector xb = ab.colPivHouseholderQr().solve(b);
  if (!xb.allFinite() || (ab * xb - b).cwiseAbs().maxCoeff() > 1e-9 || xb.minCoeff() < -1e-9) return x;
  Vector refined = Vector::Zero(n);
  for (std::size_t j = 0; j < basis.size(); ++j) {
    if (basis[j] < n) refined(basis[j]) = std::max(0.0, xb(static_cast<Eigen::Index>(j)));
  }
  return constraint_violation(p, refined) <= constraint_violation(p, x) ? refined : x;
}

inline LpSolution solve_once(const LpProblem& problem, const SimplexOptions& options) {
  Tableau tab(problem, options);
  LpSolution sol;
  if (!tab.phase_one()) {
    sol.status = LpStatus::infeasible;
    sol.iterations = tab.iterations();
    return sol;
  }
  const Vector cost = problem.direction == Direction::minimize ? problem.objective : Vector(-problem.objective);
  tab.phase_two(cost);
  sol.status = LpStatus::optimal;
  sol.x = refine_basic_solution(problem, tab.basis(), tab.solution());
  sol.value = problem.objective.dot(sol.x);
  sol.max_residual = constraint_violation(problem, sol.x);
  sol.iterations = tab.iterations();
  return sol;
}

}  // namespace detail

// Pivoting on an entry that is really cancellation noise can wreck the
// tableau on degenerate programs. An answer that misses the constraints is
// re-solved with a coarser pivot tolerance, and never returned as optimal.
inline LpSolution simplex_solve(const LpProblem& problem, const SimplexOptions& options = {}) {
  SimplexOptions opt = options;
  double worst = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt, opt.pivot_tol *= 100.0) {
    auto sol = detail::solve_once(problem, opt);
    if (sol.status != LpStatus::optimal || sol.max_residual <= 1e-9) return sol;
    worst = sol.max_residual;
  }
  throw EstimationError("simplex: numerically unstable program (constraint residual " + std::to_string(worst) + ")");
}

}  // namespace mediation
