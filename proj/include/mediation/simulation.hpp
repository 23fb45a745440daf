#pragma once

// Monte Carlo study for a binary treatment, a probit binary mediator and a
// lognormal outcome, comparing the parametric and cell plug-in estimators.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mediation/csv.hpp"
#include "mediation/data.hpp"
#include "mediation/errors.hpp"
#include "mediation/nonparametric.hpp"
#include "mediation/numeric.hpp"
#include "mediation/parametric.hpp"
#include "mediation/probit.hpp"
#include "mediation/rng.hpp"

namespace mediation {

// Pr(M=1 | T) = Phi(alpha2 + beta2 T)
// log Y | T, M ~ N(alpha3 + beta3 T + gamma M + kappa T M, sigma3_sq)
struct SimParams {
  double alpha2 = -0.5;
  double beta2 = 1.0;
  double alpha3 = 0.5;
  double beta3 = -0.5;
  double gamma = 0.5;
  double kappa = 1.5;
  double sigma3_sq = 1.0;

  void validate() const {
    for (double v : {alpha2, beta2, alpha3, beta3, gamma, kappa, sigma3_sq}) {
      if (!std::isfinite(v)) throw InputError("simulation parameters must be finite");
    }
    if (!(sigma3_sq > 0.0)) throw InputError("sigma3_sq must be positive");
  }
};

// key=value lines (or comma/semicolon separated pairs); '#' starts a comment.
// Unlisted keys keep their defaults.
inline SimParams parse_sim_params(std::string_view text, SimParams base = {}) {
  std::map<std::string, double*, std::less<>> slots{
      {"alpha2", &base.alpha2}, {"beta2", &base.beta2},   {"alpha3", &base.alpha3},
      {"beta3", &base.beta3},   {"gamma", &base.gamma},   {"kappa", &base.kappa},
      {"sigma3_sq", &base.sigma3_sq}};
  // comments go first so that commas inside them are not separators
  std::string buf;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& c : line) {
      if (c == ',' || c == ';') c = '\n';
    }
    buf += line + '\n';
  }
  std::istringstream in(buf);
  std::string line;
  while (std::getline(in, line)) {
    const auto body = csv::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw InputError("parameter entry '" + std::string(body) + "' is not key=value");
    const auto key = csv::trim(body.substr(0, eq));
    const auto val = csv::trim(body.substr(eq + 1));
    auto it = slots.find(key);
    if (it == slots.end()) throw InputError("unknown simulation parameter '" + std::string(key) + "'");
    const auto v = csv::parse_number(val);
    if (!v) throw InputError("parameter '" + std::string(key) + "' has non-numeric value '" + std::string(val) + "'");
    *it->second = *v;
  }
  base.validate();
  return base;
}

// Closed-form ACME under the model above.
inline double true_acme(const SimParams& p, int t) {
  check_treatment_arm(t);
  p.validate();
  const double base = p.alpha3 + p.beta3 * t + 0.5 * p.sigma3_sq;
  return (std::exp(base + p.gamma + p.kappa * t) - std::exp(base)) *
         (normal_cdf(p.alpha2 + p.beta2) - normal_cdf(p.alpha2));
}

inline ColumnMapping simulation_mapping() { return {"T", "M", "Y", {}, MediatorKind::discrete}; }

// First n/2 records treated, the rest control. Per record the stream yields
// one uniform (mediator) and then one normal (outcome error).
inline Dataset generate_dataset(const SimParams& p, std::size_t n, RngStream rng) {
  p.validate();
  if (n == 0 || n % 2 != 0) throw InputError("simulation sample size must be even and positive");
  const double sigma = std::sqrt(p.sigma3_sq);
  std::vector<Record> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    r.treatment = i < n / 2 ? 1 : 0;
    const int t = r.treatment;
    const int m = rng.uniform() < normal_cdf(p.alpha2 + p.beta2 * t) ? 1 : 0;
    r.mediator = m;
    r.outcome = std::exp(p.alpha3 + p.beta3 * t + p.gamma * m + p.kappa * t * m + sigma * rng.normal());
  }
  return Dataset::with_levels(simulation_mapping(), std::move(records), {0.0, 1.0});
}

enum class SimEstimator { parametric, nonparametric };

inline std::string_view to_string(SimEstimator e) {
  return e == SimEstimator::parametric ? "parametric" : "nonparametric";
}

inline SimEstimator parse_sim_estimator(std::string_view s) {
  if (s == "parametric") return SimEstimator::parametric;
  if (s == "nonparametric") return SimEstimator::nonparametric;
  throw InputError("unknown estimator '" + std::string(s) + "' (expected parametric or nonparametric)");
}

// Probit for the mediator and OLS on log Y for the outcome, plugged into the
// closed-form ACME. The Delta-method variance uses the probit information
// inverse for (alpha2, beta2), the OLS covariance for (alpha3, beta3, gamma,
// kappa) and 2 s^4 / df for the residual variance; the blocks are
// independent.
inline EffectEstimate parametric_sim_estimate(const Dataset& data, int t, double level = 0.95) {
  check_treatment_arm(t);
  if (!has_binary_mediator(data)) throw InputError("parametric simulation estimator needs a 0/1 mediator");
  Vector logy(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (!(data[i].outcome > 0.0)) throw InputError("lognormal outcome model needs positive outcomes");
    logy(i) = std::log(data[i].outcome);
  }
  const auto pr = fit_probit(lsem::treatment_design(data, false), lsem::mediator_vector(data));
  const auto out = ols(lsem::outcome_design(data, true, false), logy);
  if (out.df == 0) throw EstimationError("outcome model has no residual degrees of freedom");

  const double a2 = pr.coefficients(0), b2 = pr.coefficients(1);
  const Vector& c = out.coefficients;
  const double s = out.residual_variance;

  const double A = normal_cdf(a2 + b2) - normal_cdf(a2);
  Eigen::Vector2d gA(normal_pdf(a2 + b2) - normal_pdf(a2), normal_pdf(a2 + b2));

  const double lin = c(0) + c(1) * t + 0.5 * s;
  const double e1 = std::exp(lin + c(2) + c(3) * t);
  const double e0 = std::exp(lin);
  const double B = e1 - e0;
  Eigen::Vector4d gB(B, t * B, e1, t * e1);
  const double var_s = 2.0 * s * s / static_cast<double>(out.df);

  const double var = B * B * gA.dot(pr.coefficient_covariance * gA) +
                     A * A * (gB.dot(out.coefficient_covariance * gB) + 0.25 * B * B * var_s);
  return normal_estimate(acme_quantity(t), A * B, var, Method::delta, level);
}

// Cell plug-in with its closed-form sampling variance.
inline EffectEstimate nonparametric_sim_estimate(const Dataset& data, int t, double level = 0.95) {
  const auto cells = cell_statistics(data);
  return normal_estimate(acme_quantity(t), acme_plugin(cells, t), acme_variance_cell(cells, t),
                         Method::cell, level);
}

struct SimRow {
  SimEstimator estimator = SimEstimator::nonparametric;
  int t = 0;
  std::size_t n = 0;
  double truth = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  std::size_t replicates = 0;  // successful replicates
  std::size_t failures = 0;
  double mean_variance = 0.0;       // average reported variance
  double empirical_variance = 0.0;  // variance of the point estimates
  double wall_seconds = 0.0;        // for the whole sample size; text table only
};

struct SimReport {
  SimParams params;
  double level = 0.95;
  std::size_t requested_replicates = 0;
  std::uint64_t seed = 0;
  std::vector<SimRow> rows;  // ordered by n, then estimator, then t
};

struct SimOptions {
  std::vector<std::size_t> sample_sizes{50, 100, 500};
  std::size_t replicates = 2000;
  std::vector<SimEstimator> estimators{SimEstimator::parametric, SimEstimator::nonparametric};
  double level = 0.95;
  unsigned threads = 1;
  double max_failure_rate = 0.05;
};

// Replicate r at sample size index k draws from rng.split(k).split(r).
inline SimReport run_monte_carlo(const SimParams& params, const SimOptions& opt, RngStream rng) {
  params.validate();
  if (opt.replicates < 100) throw InputError("the Monte Carlo study needs at least 100 replicates");
  if (opt.sample_sizes.empty()) throw InputError("no sample sizes requested");
  if (opt.estimators.empty()) throw InputError("no estimators requested");
  std::set<SimEstimator> unique(opt.estimators.begin(), opt.estimators.end());
  if (unique.size() != opt.estimators.size()) throw InputError("duplicate estimator requested");
  for (auto n : opt.sample_sizes) {
    if (n == 0 || n % 2 != 0) throw InputError("sample size " + std::to_string(n) + " is not even and positive");
  }

  SimReport rep;
  rep.params = params;
  rep.level = opt.level;
  rep.requested_replicates = opt.replicates;
  rep.seed = rng.seed();
  const std::array<double, 2> truth{true_acme(params, 0), true_acme(params, 1)};
  const std::size_t cols = opt.estimators.size() * 2;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t k = 0; k < opt.sample_sizes.size(); ++k) {
    const auto n = opt.sample_sizes[k];
    const auto size_stream = rng.split(k);
    const auto start = std::chrono::steady_clock::now();
    // points/lows/highs[r * cols + e * 2 + t]
    std::vector<double> point(opt.replicates * cols, nan), var(point), lo(point), hi(point);
    parallel_for(opt.replicates, opt.threads, [&](std::size_t r) {
      const auto data = generate_dataset(params, n, size_stream.split(r));
      for (std::size_t e = 0; e < opt.estimators.size(); ++e) {
        for (int t = 0; t < 2; ++t) {
          const auto slot = r * cols + e * 2 + static_cast<std::size_t>(t);
          try {
            const auto est = opt.estimators[e] == SimEstimator::parametric
                                 ? parametric_sim_estimate(data, t, opt.level)
                                 : nonparametric_sim_estimate(data, t, opt.level);
            point[slot] = est.point;
            var[slot] = est.variance;
            lo[slot] = est.ci_low;
            hi[slot] = est.ci_high;
          } catch (const Error&) {
            // recorded as a failure below
          }
        }
      }
    });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    for (std::size_t e = 0; e < opt.estimators.size(); ++e) {
      for (int t = 0; t < 2; ++t) {
        SimRow row;
        row.estimator = opt.estimators[e];
        row.t = t;
        row.n = n;
        row.truth = truth[t];
        row.wall_seconds = seconds;
        double err_sum = 0.0, err_sq = 0.0, covered = 0.0, var_sum = 0.0;
        std::vector<double> pts;
        for (std::size_t r = 0; r < opt.replicates; ++r) {
          const auto slot = r * cols + e * 2 + static_cast<std::size_t>(t);
          if (std::isnan(point[slot])) {
            ++row.failures;
            continue;
          }
          const double err = point[slot] - truth[t];
          err_sum += err;
          err_sq += err * err;
          covered += lo[slot] <= truth[t] && truth[t] <= hi[slot];
          var_sum += var[slot];
          pts.push_back(point[slot]);
        }
        if (static_cast<double>(row.failures) > opt.max_failure_rate * static_cast<double>(opt.replicates)) {
          throw EstimationError(std::string(to_string(row.estimator)) + " estimator failed in " +
                                std::to_string(row.failures) + " of " + std::to_string(opt.replicates) +
                                " replicates at n=" + std::to_string(n));
        }
        row.replicates = pts.size();
        const double m = static_cast<double>(row.replicates);
        row.bias = err_sum / m;
        row.rmse = std::sqrt(err_sq / m);
        row.coverage = covered / m;
        row.mean_variance = var_sum / m;
        row.empirical_variance = row.replicates > 1 ? sample_variance(pts) : 0.0;
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

inline const std::vector<std::string>& report_csv_header() {
  static const std::vector<std::string> h{"estimator", "t",        "n",        "true_acme",
                                          "bias",      "rmse",     "coverage", "replicates",
                                          "failures",  "mean_variance", "empirical_variance"};
  return h;
}

// Machine-readable report; wall time is left out so that the bytes depend
// only on the seed and options.
inline std::string report_csv(const SimReport& rep) {
  if (rep.rows.empty()) throw InputError("empty simulation report");
  std::ostringstream out;
  const auto& h = report_csv_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
  for (const auto& r : rep.rows) {
    out << to_string(r.estimator) << ',' << r.t << ',' << r.n << ',' << csv::format_number(r.truth) << ','
        << csv::format_number(r.bias) << ',' << csv::format_number(r.rmse) << ','
        << csv::format_number(r.coverage) << ',' << r.replicates << ',' << r.failures << ','
        << csv::format_number(r.mean_variance) << ',' << csv::format_number(r.empirical_variance) << '\n';
  }
  return out.str();
}

inline std::vector<SimRow> parse_report_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows.front() != report_csv_header()) throw InputError("not a simulation report CSV");
  auto num = [](const std::string& cell, const char* what) {
    const auto v = csv::parse_number(cell);
    if (!v) throw InputError(std::string("simulation report: bad ") + what + " '" + cell + "'");
    return *v;
  };
  std::vector<SimRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() == 1 && csv::trim(c[0]).empty()) continue;
    if (c.size() != report_csv_header().size()) throw InputError("simulation report: ragged row " + std::to_string(i));
    SimRow r;
    r.estimator = parse_sim_estimator(c[0]);
    r.t = static_cast<int>(num(c[1], "t"));
    r.n = static_cast<std::size_t>(num(c[2], "n"));
    r.truth = num(c[3], "true_acme");
    r.bias = num(c[4], "bias");
    r.rmse = num(c[5], "rmse");
    r.coverage = num(c[6], "coverage");
    r.replicates = static_cast<std::size_t>(num(c[7], "replicates"));
    r.failures = static_cast<std::size_t>(num(c[8], "failures"));
    r.mean_variance = num(c[9], "mean_variance");
    r.empirical_variance = num(c[10], "empirical_variance");
    out.push_back(r);
  }
  return out;
}

// Human-readable table: one line per (n, estimator), with bias, RMSE and
// coverage for t = 0 and t = 1 side by side.
inline std::string report_table(const SimReport& rep) {
  if (rep.rows.empty()) throw InputError("empty simulation report");
  std::ostringstream out;
  out << std::fixed;
  out << "true ACME: delta(0) = " << std::setprecision(3) << true_acme(rep.params, 0)
      << ", delta(1) = " << std::setprecision(2) << true_acme(rep.params, 1) << '\n';
  out << "replicates per cell: " << rep.requested_replicates << ", level " << std::setprecision(2) << rep.level << "\n\n";
  out << std::setw(6) << "n" << "  " << std::left << std::setw(14) << "estimator" << std::right;
  for (int t = 0; t < 2; ++t) {
    out << std::setw(10) << ("bias(" + std::to_string(t) + ")") << std::setw(10) << ("rmse(" + std::to_string(t) + ")")
        << std::setw(10) << ("cov(" + std::to_string(t) + ")");
  }
  out << std::setw(10) << "failed" << std::setw(10) << "seconds" << '\n';
  for (std::size_t i = 0; i + 1 < rep.rows.size(); i += 2) {
    const auto& r0 = rep.rows[i].t == 0 ? rep.rows[i] : rep.rows[i + 1];
    const auto& r1 = rep.rows[i].t == 0 ? rep.rows[i + 1] : rep.rows[i];
    out << std::setw(6) << r0.n << "  " << std::left << std::setw(14) << to_string(r0.estimator) << std::right
        << std::setprecision(3);
    for (const auto* r : {&r0, &r1}) {
      out << std::setw(10) << r->bias << std::setw(10) << r->rmse << std::setw(10) << r->coverage;
    }
    out << std::setw(10) << (r0.failures + r1.failures) << std::setw(10) << std::setprecision(2) << r0.wall_seconds << '\n';
  }
  return out.str();
}

}  // namespace mediation
