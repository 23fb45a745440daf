#pragma once

// Nonparametric and semiparametric ACME estimators: the cell plug-in with its
// asymptotic variance, covariate-stratified aggregation, the model-based
// plug-in, the Monte Carlo mediator-draw estimator and the percentile
// bootstrap.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mediation/data.hpp"
#include "mediation/errors.hpp"
#include "mediation/numeric.hpp"
#include "mediation/parametric.hpp"
#include "mediation/probit.hpp"
#include "mediation/rng.hpp"

namespace mediation {

// Per-arm, per-mediator-level sample moments. Undefined entries (empty cell
// means, variances of cells with fewer than two units) are NaN.
struct CellStats {
  std::size_t levels = 0;
  std::array<std::size_t, 2> arm_n{};
  std::array<std::vector<double>, 2> nu;
  std::array<std::vector<double>, 2> mu;
  std::array<std::vector<double>, 2> cell_var;
  std::array<std::vector<std::size_t>, 2> cell_n;
  std::array<double, 2> arm_mean{};
  std::array<double, 2> arm_var{};

  bool mean_defined(int t, std::size_t m) const { return cell_n[t][m] > 0; }
  bool variance_defined(int t, std::size_t m) const { return cell_n[t][m] > 1; }
};

inline CellStats cell_statistics(const Dataset& data) {
  if (!data.discrete_mediator()) {
    throw InputError("cell statistics require a discrete mediator");
  }
  const auto J = data.num_levels();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  CellStats c;
  c.levels = J;
  std::array<std::vector<double>, 2> sum, sumsq;
  std::array<double, 2> arm_sum{}, arm_sumsq{};
  for (int t = 0; t < 2; ++t) {
    c.cell_n[t].assign(J, 0);
    sum[t].assign(J, 0.0);
  }
  for (const auto& r : data.records()) {
    const auto m = static_cast<std::size_t>(r.mediator_level);
    c.cell_n[r.treatment][m] += 1;
    sum[r.treatment][m] += r.outcome;
    c.arm_n[r.treatment] += 1;
    arm_sum[r.treatment] += r.outcome;
  }
  for (int t = 0; t < 2; ++t) {
    if (c.arm_n[t] == 0) throw EstimationError("treatment arm " + std::to_string(t) + " is empty");
    c.arm_mean[t] = arm_sum[t] / static_cast<double>(c.arm_n[t]);
    c.nu[t].resize(J);
    c.mu[t].resize(J);
    for (std::size_t m = 0; m < J; ++m) {
      c.nu[t][m] = static_cast<double>(c.cell_n[t][m]) / static_cast<double>(c.arm_n[t]);
      c.mu[t][m] = c.cell_n[t][m] ? sum[t][m] / static_cast<double>(c.cell_n[t][m]) : nan;
    }
    sumsq[t].assign(J, 0.0);
  }
  // Second pass around the means for numerically stable variances.
  for (const auto& r : data.records()) {
    const auto m = static_cast<std::size_t>(r.mediator_level);
    const double d = r.outcome - c.mu[r.treatment][m];
    sumsq[r.treatment][m] += d * d;
    const double a = r.outcome - c.arm_mean[r.treatment];
    arm_sumsq[r.treatment] += a * a;
  }
  for (int t = 0; t < 2; ++t) {
    c.cell_var[t].resize(J);
    for (std::size_t m = 0; m < J; ++m) {
      c.cell_var[t][m] =
          c.cell_n[t][m] > 1 ? sumsq[t][m] / static_cast<double>(c.cell_n[t][m] - 1) : nan;
    }
    c.arm_var[t] = c.arm_n[t] > 1 ? arm_sumsq[t] / static_cast<double>(c.arm_n[t] - 1) : nan;
  }
  return c;
}

// Sum over m of mu_tm (nu_1m - nu_0m).
inline double acme_plugin(const CellStats& c, int t) {
  check_treatment_arm(t);
  double est = 0.0;
  for (std::size_t m = 0; m < c.levels; ++m) {
    const double diff = c.nu[1][m] - c.nu[0][m];
    if (!c.mean_defined(t, m)) {
      if (diff == 0.0) continue;
      throw EstimationError("empty cell (t=" + std::to_string(t) + ", m=" + std::to_string(m) +
                            "): mediator level never observed in this arm");
    }
    est += c.mu[t][m] * diff;
  }
  return est;
}

// Asymptotic variance of the cell plug-in estimator given the realized
// treatment assignment, with sample moments substituted for population ones.
inline double acme_variance_cell(const CellStats& c, int t) {
  check_treatment_arm(t);
  const int s = 1 - t;
  const double nt = static_cast<double>(c.arm_n[t]);
  const double ns = static_cast<double>(c.arm_n[s]);
  if (c.arm_n[t] < 2) throw EstimationError("cell variance: arm " + std::to_string(t) + " has fewer than two units");

  double first = 0.0;
  for (std::size_t m = 0; m < c.levels; ++m) {
    const double vs = c.nu[s][m];
    if (vs == 0.0) continue;
    if (c.nu[t][m] == 0.0) {
      throw EstimationError("cell variance: cell (t=" + std::to_string(t) + ", m=" +
                            std::to_string(m) + ") is empty but observed in the other arm");
    }
    if (!c.variance_defined(t, m)) {
      throw EstimationError("cell variance: cell (t=" + std::to_string(t) + ", m=" +
                            std::to_string(m) + ") has a single observation");
    }
    const double mu = c.mu[t][m];
    first += vs * ((vs / c.nu[t][m] - 2.0) * c.cell_var[t][m] + nt * (1.0 - vs) * mu * mu / ns);
  }
  first /= nt;

  double cross = 0.0;
  for (std::size_t m = 0; m + 1 < c.levels; ++m) {
    if (c.nu[s][m] == 0.0) continue;
    for (std::size_t mp = m + 1; mp < c.levels; ++mp) {
      if (c.nu[s][mp] == 0.0) continue;
      cross += c.nu[s][m] * c.nu[s][mp] * c.mu[t][m] * c.mu[t][mp];
    }
  }
  const double var = first - 2.0 / ns * cross + c.arm_var[t] / nt;
  // Sums of nonnegative quantities can round to tiny negatives.
  return std::max(var, 0.0);
}

// Sample-size-weighted aggregate of within-stratum plug-in estimates and
// cell variances.
inline EffectEstimate stratified_acme(const Dataset& data, const StratumIndex& strata, int t,
                                      double level = 0.95) {
  check_treatment_arm(t);
  const double n = static_cast<double>(data.n());
  double point = 0.0;
  double var = 0.0;
  for (std::size_t k = 0; k < strata.size(); ++k) {
    try {
      const auto cells = cell_statistics(data.subset(strata[k].indices));
      const double w = static_cast<double>(strata[k].indices.size()) / n;
      point += w * acme_plugin(cells, t);
      var += w * w * acme_variance_cell(cells, t);
    } catch (const EstimationError& e) {
      std::string key;
      for (double x : strata[k].key) key += (key.empty() ? "" : ",") + csv::format_number(x);
      throw EstimationError("stratum " + std::to_string(k) + " (covariates " + key + "): " + e.what());
    }
  }
  return normal_estimate(acme_quantity(t), point, var, Method::cell, level);
}

// Fitted outcome and mediator models. `m` passed to outcome_mean is the
// level code for discrete mediators and the mediator value otherwise.
struct ComponentModels {
  std::size_t levels = 0;  // J for discrete mediators, 0 for continuous ones
  std::function<double(int t, double m, std::span<const double> x)> outcome_mean;
  // Pr(M = m | T = t, X = x) for m = 0..J-1 (discrete mediators).
  std::function<std::vector<double>(int t, std::span<const double> x)> mediator_probs;
  // Inverse conditional CDF of M given (t, x) evaluated at u in (0,1).
  std::function<double(int t, std::span<const double> x, double u)> mediator_quantile;
};

// Frequency/mean tables per exact covariate tuple.
inline ComponentModels saturated_models(const Dataset& data) {
  if (!data.discrete_mediator()) throw InputError("saturated models need a discrete mediator");
  struct Cell {
    std::array<std::size_t, 2> arm{};
    std::array<std::vector<std::size_t>, 2> n;
    std::array<std::vector<double>, 2> sum;
  };
  const auto J = data.num_levels();
  auto table = std::make_shared<std::map<std::vector<double>, Cell>>();
  for (const auto& r : data.records()) {
    auto& cell = (*table)[r.covariates];
    if (cell.n[0].empty()) {
      for (int t = 0; t < 2; ++t) {
        cell.n[t].assign(J, 0);
        cell.sum[t].assign(J, 0.0);
      }
    }
    const auto m = static_cast<std::size_t>(r.mediator_level);
    cell.arm[r.treatment] += 1;
    cell.n[r.treatment][m] += 1;
    cell.sum[r.treatment][m] += r.outcome;
  }
  auto lookup = [table](std::span<const double> x) -> const Cell& {
    auto it = table->find(std::vector<double>(x.begin(), x.end()));
    if (it == table->end()) throw EstimationError("saturated model: covariate pattern not in the fitting data");
    return it->second;
  };

  ComponentModels models;
  models.levels = J;
  models.outcome_mean = [lookup](int t, double m, std::span<const double> x) {
    const auto& c = lookup(x);
    const auto k = static_cast<std::size_t>(m);
    if (c.n[t][k] == 0) {
      throw EstimationError("saturated model: empty cell (t=" + std::to_string(t) +
                            ", m=" + std::to_string(k) + ") in a covariate stratum");
    }
    return c.sum[t][k] / static_cast<double>(c.n[t][k]);
  };
  models.mediator_probs = [lookup, J](int t, std::span<const double> x) {
    const auto& c = lookup(x);
    if (c.arm[t] == 0) throw EstimationError("saturated model: empty treatment arm in a covariate stratum");
    std::vector<double> p(J);
    for (std::size_t m = 0; m < J; ++m) {
      p[m] = static_cast<double>(c.n[t][m]) / static_cast<double>(c.arm[t]);
    }
    return p;
  };
  models.mediator_quantile = [probs = models.mediator_probs](int t, std::span<const double> x,
                                                             double u) {
    const auto p = probs(t, x);
    double acc = 0.0;
    for (std::size_t m = 0; m + 1 < p.size(); ++m) {
      acc += p[m];
      if (u <= acc) return static_cast<double>(m);
    }
    return static_cast<double>(p.size() - 1);
  };
  return models;
}

namespace detail {

inline double linear_predictor(const Vector& beta, std::size_t offset, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += beta(static_cast<Eigen::Index>(offset + k)) * x[k];
  return s;
}

}  // namespace detail

// Probit mediator model and lognormal outcome model with a T*M interaction;
// binary mediator, positive outcome.
inline ComponentModels probit_lognormal_models(const Dataset& data, bool include_covariates) {
  if (!has_binary_mediator(data)) throw InputError("probit mediator model needs a 0/1 mediator");
  const auto q = include_covariates ? data.num_covariates() : 0;
  Vector logy(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (!(data[i].outcome > 0.0)) throw InputError("lognormal outcome model needs positive outcomes");
    logy(i) = std::log(data[i].outcome);
  }
  const auto probit = fit_probit(lsem::treatment_design(data, include_covariates),
                                 lsem::mediator_vector(data));
  const auto out = ols(lsem::outcome_design(data, true, include_covariates), logy);
  const Vector a = probit.coefficients;
  const Vector b = out.coefficients;
  const double half_var = 0.5 * out.residual_variance;

  auto prob1 = [a, q](int t, std::span<const double> x) {
    if (x.size() < q) throw InputError("covariate vector too short");
    return normal_cdf(a(0) + a(1) * t + detail::linear_predictor(a, 2, x.first(q)));
  };
  ComponentModels models;
  models.levels = 2;
  models.outcome_mean = [b, q, half_var](int t, double m, std::span<const double> x) {
    if (x.size() < q) throw InputError("covariate vector too short");
    return std::exp(b(0) + b(1) * t + b(2) * m + b(3) * t * m +
                    detail::linear_predictor(b, 4, x.first(q)) + half_var);
  };
  models.mediator_probs = [prob1](int t, std::span<const double> x) {
    const double p = prob1(t, x);
    return std::vector<double>{1.0 - p, p};
  };
  models.mediator_quantile = [prob1](int t, std::span<const double> x, double u) {
    return u > 1.0 - prob1(t, x) ? 1.0 : 0.0;
  };
  return models;
}

// Normal linear mediator model and linear outcome model with interaction;
// for continuous mediators.
inline ComponentModels gaussian_linear_models(const Dataset& data, bool include_covariates) {
  const auto q = include_covariates ? data.num_covariates() : 0;
  const auto med = ols(lsem::treatment_design(data, include_covariates), lsem::mediator_vector(data));
  const auto out = ols(lsem::outcome_design(data, true, include_covariates), lsem::outcome_vector(data));
  const Vector a = med.coefficients;
  const Vector b = out.coefficients;
  const double sd = std::sqrt(med.residual_variance);

  ComponentModels models;
  models.levels = 0;
  models.outcome_mean = [b, q](int t, double m, std::span<const double> x) {
    if (x.size() < q) throw InputError("covariate vector too short");
    return b(0) + b(1) * t + b(2) * m + b(3) * t * m + detail::linear_predictor(b, 4, x.first(q));
  };
  models.mediator_quantile = [a, q, sd](int t, std::span<const double> x, double u) {
    if (x.size() < q) throw InputError("covariate vector too short");
    return a(0) + a(1) * t + detail::linear_predictor(a, 2, x.first(q)) + sd * normal_quantile(u);
  };
  return models;
}

// (1/n) sum_i sum_m mu_tm(X_i) (nu_1m(X_i) - nu_0m(X_i)).
inline double acme_model_based(const ComponentModels& models, const Dataset& data, int t) {
  check_treatment_arm(t);
  if (models.levels == 0 || !models.mediator_probs || !models.outcome_mean) {
    throw InputError("model-based estimator needs discrete mediator probabilities");
  }
  double total = 0.0;
  for (const auto& r : data.records()) {
    const auto p1 = models.mediator_probs(1, r.covariates);
    const auto p0 = models.mediator_probs(0, r.covariates);
    if (p1.size() != models.levels || p0.size() != models.levels) {
      throw EstimationError("mediator model returned the wrong number of levels");
    }
    double inner = 0.0;
    for (std::size_t m = 0; m < models.levels; ++m) {
      const double diff = p1[m] - p0[m];
      if (diff == 0.0) continue;
      inner += models.outcome_mean(t, static_cast<double>(m), r.covariates) * diff;
    }
    total += inner;
  }
  return total / static_cast<double>(data.n());
}

// (1/nK) sum_i sum_k { mu_t(m1_ik, X_i) - mu_t(m0_ik, X_i) }, where m1_ik and
// m0_ik are drawn from the two arm-specific mediator laws using the same
// uniform (common random numbers).
inline double acme_montecarlo(const ComponentModels& models, const Dataset& data, int t,
                              std::size_t draws, RngStream rng) {
  check_treatment_arm(t);
  if (draws < 1) throw InputError("acme_montecarlo: need at least one draw");
  if (!models.mediator_quantile || !models.outcome_mean) {
    throw InputError("acme_montecarlo: models need a mediator sampler and an outcome model");
  }
  double total = 0.0;
  for (const auto& r : data.records()) {
    double unit = 0.0;
    for (std::size_t k = 0; k < draws; ++k) {
      const double u = rng.uniform();
      const double m1 = models.mediator_quantile(1, r.covariates, u);
      const double m0 = models.mediator_quantile(0, r.covariates, u);
      if (!std::isfinite(m1) || !std::isfinite(m0)) throw EstimationError("mediator sampler failed");
      if (m1 == m0) continue;
      unit += models.outcome_mean(t, m1, r.covariates) - models.outcome_mean(t, m0, r.covariates);
    }
    total += unit;
  }
  return total / (static_cast<double>(data.n()) * static_cast<double>(draws));
}

using Estimator = std::function<double(const Dataset&)>;

struct BootstrapResult {
  EffectEstimate estimate;
  std::size_t skipped = 0;
  std::vector<double> replicates;  // successful resample estimates, in replicate order
};

// Percentile bootstrap. Replicate b resamples with stream rng.split(b);
// resamples on which the estimator raises a library error are skipped.
inline BootstrapResult bootstrap_ci(const Estimator& estimator, const Dataset& data,
                                    std::size_t replicates, double level, RngStream rng,
                                    Quantity quantity = Quantity::acme_t0, unsigned threads = 1) {
  if (replicates < 100) throw InputError("bootstrap_ci: need at least 100 replicates");
  if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0,1)");
  const double point = estimator(data);

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> draws(replicates, nan);
  parallel_for(replicates, threads, [&](std::size_t b) {
    const auto idx = bootstrap_indices(data.n(), rng.split(b));
    try {
      draws[b] = estimator(data.subset(idx));
    } catch (const Error&) {
      draws[b] = nan;
    }
  });

  BootstrapResult result;
  for (double d : draws) {
    if (std::isnan(d)) ++result.skipped;
    else result.replicates.push_back(d);
  }
  if (result.skipped * 10 > replicates) {
    throw EstimationError("unstable resampling: " + std::to_string(result.skipped) + " of " +
                          std::to_string(replicates) + " bootstrap resamples failed");
  }
  std::vector<double> sorted = result.replicates;
  std::sort(sorted.begin(), sorted.end());
  const double alpha = 1.0 - level;
  auto& e = result.estimate;
  e.quantity = quantity;
  e.point = point;
  e.variance = sample_variance(result.replicates);
  e.ci_low = sorted_quantile(sorted, alpha / 2.0);
  e.ci_high = sorted_quantile(sorted, 1.0 - alpha / 2.0);
  e.method = Method::bootstrap;
  e.level = level;
  return result;
}

}  // namespace mediation
