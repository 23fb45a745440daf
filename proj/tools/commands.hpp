#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mediation/mediation.hpp"

#ifndef MEDIATION_VERSION
#define MEDIATION_VERSION "0.0.0"
#endif

namespace mediation::cli {

using json = nlohmann::ordered_json;

struct CommonOptions {
  std::string input;
  std::string treatment = "T";
  std::string mediator = "M";
  std::string outcome = "Y";
  std::vector<std::string> covariates;
  bool drop_missing = false;
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_prefix;
};

struct MediateOptions {
  CommonOptions common;
  bool interaction = false;
  bool nonparametric = false;
  std::size_t bootstrap = 0;
};

struct SensitivityOptions {
  CommonOptions common;
  bool rho_mode = false;
  bool r2_mode = false;
  bool interaction = false;  // rejected
  double rho_min = -0.99;
  double rho_max = 0.99;
  std::size_t rho_count = 199;
  std::string r2_kind = "unexplained";
  std::size_t resolution = 100;
  std::string sign = "both";
};

struct BoundsOptions {
  CommonOptions common;
  bool dichotomize_mediator = false;
  bool dichotomize_outcome = false;
  std::string upsilon_grid = "0:1:21";
  std::string arm = "both";
};

struct SimulateOptions {
  std::string params_file;
  std::vector<std::string> param_overrides;
  std::vector<std::size_t> n_list{50, 100, 500};
  std::size_t replicates = 2000;
  std::vector<std::string> estimators{"parametric", "nonparametric"};
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_prefix;
};

// ---------------------------------------------------------------- plumbing

inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
  if (!f) throw InputError("write failed for '" + path + "'");
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

// The manifest is the only output that carries run-specific data
// (timestamp), so it lives beside the numeric files rather than inside them.
inline void write_manifest(const std::string& prefix, const std::string& command, const json& options,
                           const std::string& fingerprint, std::uint64_t seed, std::vector<std::string> outputs) {
  if (prefix.empty()) return;
  json m;
  m["command"] = command;
  m["options"] = options;
  m["input_fingerprint"] = fingerprint;
  m["seed"] = seed;
  m["tool_version"] = MEDIATION_VERSION;
  m["timestamp"] = utc_timestamp();
  m["outputs"] = outputs;
  write_text(prefix + "_manifest.json", m.dump(2) + "\n");
}

inline json common_json(const CommonOptions& o) {
  json j;
  j["input"] = o.input;
  j["treatment"] = o.treatment;
  j["mediator"] = o.mediator;
  j["outcome"] = o.outcome;
  j["covariates"] = o.covariates;
  j["drop_missing"] = o.drop_missing;
  j["level"] = o.level;
  j["seed"] = o.seed;
  return j;
}

struct Loaded {
  Dataset data;
  std::size_t dropped = 0;
  std::string fingerprint;
};

inline Loaded load(const CommonOptions& o, MediatorKind kind) {
  if (!(o.level > 0.0 && o.level < 1.0)) throw InputError("--level must lie in (0, 1)");
  const auto text = csv::read_file(o.input);
  ColumnMapping mapping{o.treatment, o.mediator, o.outcome, o.covariates, kind};
  auto res = parse_csv_dataset(text, mapping, o.drop_missing ? NaPolicy::drop : NaPolicy::error);
  return {std::move(res.data), res.dropped, fnv1a_hex(text)};
}

inline json estimate_json(const std::string& model, const EffectEstimate& e) {
  json j;
  j["model"] = model;
  j["quantity"] = std::string(to_string(e.quantity));
  j["point"] = number(e.point);
  j["variance"] = number(e.variance);
  j["ci"] = json::array({number(e.ci_low), number(e.ci_high)});
  j["method"] = std::string(to_string(e.method));
  return j;
}

inline void print_estimates(std::ostream& out, const std::vector<std::pair<std::string, EffectEstimate>>& rows,
                            double level) {
  out << std::left << std::setw(16) << "model" << std::setw(10) << "quantity" << std::setw(11) << "method"
      << std::right << std::setw(12) << "estimate" << std::setw(12) << "se" << "  " << std::setprecision(0)
      << std::fixed << level * 100 << "% CI\n";
  out << std::setprecision(4);
  for (const auto& [model, e] : rows) {
    out << std::left << std::setw(16) << model << std::setw(10) << to_string(e.quantity) << std::setw(11)
        << to_string(e.method) << std::right << std::setw(12) << e.point << std::setw(12) << e.se() << "  ["
        << e.ci_low << ", " << e.ci_high << "]\n";
  }
  out.unsetf(std::ios::floatfield);
}

// ---------------------------------------------------------------- mediate

inline int cmd_mediate(const MediateOptions& o, std::ostream& out) {
  const auto kind = o.nonparametric ? MediatorKind::discrete : MediatorKind::continuous;
  const auto [data, dropped, fingerprint] = load(o.common, kind);
  const bool covs = data.num_covariates() > 0;
  const double level = o.common.level;
  const unsigned threads = resolve_threads(o.common.threads);
  const RngStream root(o.common.seed);
  if (o.bootstrap != 0 && o.bootstrap < 100) throw InputError("--bootstrap needs at least 100 replicates");

  std::vector<std::pair<std::string, EffectEstimate>> rows;
  std::optional<double> interaction_p;
  std::uint64_t stream = 0;
  auto boot = [&](const std::string& model, const Estimator& est, Quantity q) {
    if (o.bootstrap == 0) return;
    rows.emplace_back(model, bootstrap_ci(est, data, o.bootstrap, level, root.split(stream++), q, threads).estimate);
  };

  {
    const auto fit = fit_lsem(data, false, covs);
    for (int t = 0; t < 2; ++t) rows.emplace_back("no_interaction", acme_product(fit, t, Method::delta, level));
    rows.emplace_back("no_interaction", total_effect(fit, level));
    boot("no_interaction", [covs](const Dataset& d) { return acme_product(fit_lsem(d, false, covs), 0).point; },
         Quantity::acme_t0);
  }
  if (o.interaction) {
    const auto fit = fit_lsem(data, true, covs);
    for (int t = 0; t < 2; ++t) rows.emplace_back("interaction", acme_product(fit, t, Method::delta, level));
    for (int t = 0; t < 2; ++t) rows.emplace_back("interaction", direct_effect(fit, t, level));
    rows.emplace_back("interaction", total_effect(fit, level));
    interaction_p = test_no_interaction(fit);
    for (int t = 0; t < 2; ++t) {
      boot("interaction", [covs, t](const Dataset& d) { return acme_product(fit_lsem(d, true, covs), t).point; },
           acme_quantity(t));
    }
  }
  if (o.nonparametric) {
    if (covs) {
      const auto strata = stratify(data);
      for (int t = 0; t < 2; ++t) rows.emplace_back("nonparametric", stratified_acme(data, strata, t, level));
      for (int t = 0; t < 2; ++t) {
        boot("nonparametric",
             [t](const Dataset& d) {
               const auto s = stratify(d);
               double v = 0.0;
               for (const auto& st : s) {
                 v += static_cast<double>(st.indices.size()) * acme_plugin(cell_statistics(d.subset(st.indices)), t);
               }
               return v / static_cast<double>(d.n());
             },
             acme_quantity(t));
      }
    } else {
      const auto cells = cell_statistics(data);
      for (int t = 0; t < 2; ++t) {
        rows.emplace_back("nonparametric", normal_estimate(acme_quantity(t), acme_plugin(cells, t),
                                                           acme_variance_cell(cells, t), Method::cell, level));
      }
      // Difference in arm means with its Neyman variance.
      const double var = cells.arm_var[1] / static_cast<double>(cells.arm_n[1]) +
                         cells.arm_var[0] / static_cast<double>(cells.arm_n[0]);
      rows.emplace_back("nonparametric", normal_estimate(Quantity::total, cells.arm_mean[1] - cells.arm_mean[0],
                                                         var, Method::delta, level));
      for (int t = 0; t < 2; ++t) {
        boot("nonparametric", [t](const Dataset& d) { return acme_plugin(cell_statistics(d), t); }, acme_quantity(t));
      }
    }
  }

  out << "n = " << data.n();
  if (dropped) out << " (" << dropped << " rows with missing values dropped)";
  out << "\n";
  print_estimates(out, rows, level);
  if (interaction_p) out << "no-interaction test p = " << csv::format_number(*interaction_p) << "\n";

  if (!o.common.out_prefix.empty()) {
    json j;
    j["command"] = "mediate";
    j["n"] = data.n();
    j["dropped"] = dropped;
    j["level"] = level;
    j["estimates"] = json::array();
    for (const auto& [model, e] : rows) j["estimates"].push_back(estimate_json(model, e));
    j["interaction_p_value"] = interaction_p ? number(*interaction_p) : json(nullptr);
    const auto path = o.common.out_prefix + "_mediate.json";
    write_text(path, j.dump(2) + "\n");
    auto opts = common_json(o.common);
    opts["interaction"] = o.interaction;
    opts["nonparametric"] = o.nonparametric;
    opts["bootstrap"] = o.bootstrap;
    write_manifest(o.common.out_prefix, "mediate", opts, fingerprint, o.common.seed, {path});
  }
  return 0;
}

// ---------------------------------------------------------------- sensitivity

inline int cmd_sensitivity(const SensitivityOptions& o, std::ostream& out) {
  if (o.interaction) throw InputError("sensitivity analysis is defined only for the no-interaction model");
  if (o.rho_mode == o.r2_mode) throw InputError("choose exactly one of --rho or --r2");
  const auto [data, dropped, fingerprint] = load(o.common, MediatorKind::continuous);
  const bool covs = data.num_covariates() > 0;
  const auto fit = fit_lsem(data, false, covs);
  const double rho0 = acme_product(fit, 0).point;
  const auto& prefix = o.common.out_prefix;
  std::vector<std::string> outputs;
  auto opts = common_json(o.common);

  json j;
  j["command"] = "sensitivity";
  j["n"] = data.n();
  j["rho_tilde"] = number(fit.rho_tilde);
  j["acme_at_rho0"] = number(rho0);

  if (o.rho_mode) {
    RhoSweepOptions ro;
    ro.level = o.common.level;
    ro.include_covariates = covs;
    ro.threads = resolve_threads(o.common.threads);
    const auto rep = rho_sweep(data, default_rho_grid(o.rho_min, o.rho_max, o.rho_count), ro);
    j["mode"] = "rho";
    j["zero_crossing_rho"] = number(rep.zero_crossing_rho);
    j["ci_zero_band"] = rep.ci_zero_band
                            ? json::array({number(rep.ci_zero_band->first), number(rep.ci_zero_band->second)})
                            : json(nullptr);
    j["sign_of_beta2"] = rep.sign_of_beta2;
    j["failed_points"] = rep.failed_points;
    j["level"] = rep.level;

    out << "rho_tilde (ACME = 0) = " << csv::format_number(rep.zero_crossing_rho) << "\n";
    out << "ACME at rho = 0: " << csv::format_number(rho0) << "\n";
    if (rep.ci_zero_band) {
      out << "CI covers zero for rho in [" << csv::format_number(rep.ci_zero_band->first) << ", "
          << csv::format_number(rep.ci_zero_band->second) << "]\n";
    } else {
      out << "CI covers zero nowhere on the grid range\n";
    }
    if (rep.failed_points) out << rep.failed_points << " grid points without a SUR fit\n";

    if (!prefix.empty()) {
      std::ostringstream c;
      c << "rho,acme,se,ci_low,ci_high,converged\n";
      for (const auto& p : rep.curve) {
        auto f = [](double v) { return std::isfinite(v) ? csv::format_number(v) : std::string(); };
        c << csv::format_number(p.rho) << ',' << f(p.acme) << ',' << f(p.se) << ',' << f(p.ci_low) << ','
          << f(p.ci_high) << ',' << (p.converged ? 1 : 0) << '\n';
      }
      outputs.push_back(prefix + "_rho.csv");
      write_text(outputs.back(), c.str());
    }
    opts["mode"] = "rho";
    opts["rho_min"] = o.rho_min;
    opts["rho_max"] = o.rho_max;
    opts["rho_count"] = o.rho_count;
  } else {
    R2Kind kind;
    if (o.r2_kind == "unexplained") kind = R2Kind::unexplained;
    else if (o.r2_kind == "original") kind = R2Kind::original;
    else throw InputError("--kind must be 'unexplained' or 'original'");
    std::vector<int> signs;
    if (o.sign == "both") signs = {1, -1};
    else if (o.sign == "+1" || o.sign == "1" || o.sign == "+") signs = {1};
    else if (o.sign == "-1" || o.sign == "-") signs = {-1};
    else throw InputError("--sign must be +1, -1 or both");

    j["mode"] = "r2";
    j["kind"] = std::string(to_string(kind));
    j["resolution"] = o.resolution;
    j["quadrants"] = json::array();
    out << "ACME at rho = 0: " << csv::format_number(rho0) << "\n";
    for (int s : signs) {
      const auto g = r2_grid(fit, kind, s, o.resolution);
      const auto sum = summarize(g, rho0);
      json q;
      q["sign"] = s;
      q["feasible_cells"] = sum.feasible_cells;
      q["same_sign_cells"] = sum.same_sign_cells;
      q["min_acme"] = sum.feasible_cells ? number(sum.min_acme) : json(nullptr);
      q["max_acme"] = sum.feasible_cells ? number(sum.max_acme) : json(nullptr);
      q["sign_robust"] = sum.sign_robust;
      j["quadrants"].push_back(q);
      out << "sign " << (s > 0 ? "+1" : "-1") << ": " << sum.same_sign_cells << " of " << sum.feasible_cells
          << " feasible cells keep the sign of the rho = 0 estimate\n";
      if (!prefix.empty()) {
        std::ostringstream c;
        c << "m_axis,y_axis,sign,acme,feasible\n";
        for (std::size_t a = 0; a < g.mediator_axis.size(); ++a) {
          for (std::size_t b = 0; b < g.outcome_axis.size(); ++b) {
            c << csv::format_number(g.mediator_axis[a]) << ',' << csv::format_number(g.outcome_axis[b]) << ',' << s << ','
              << (g.feasible[a][b] ? csv::format_number(g.values[a][b]) : std::string()) << ','
              << (g.feasible[a][b] ? 1 : 0) << '\n';
          }
        }
        outputs.push_back(prefix + "_r2_" + (s > 0 ? "pos" : "neg") + ".csv");
        write_text(outputs.back(), c.str());
      }
    }
    opts["mode"] = "r2";
    opts["kind"] = o.r2_kind;
    opts["resolution"] = o.resolution;
    opts["sign"] = o.sign;
  }

  if (!prefix.empty()) {
    outputs.push_back(prefix + "_sensitivity.json");
    write_text(outputs.back(), j.dump(2) + "\n");
    write_manifest(prefix, "sensitivity", opts, fingerprint, o.common.seed, outputs);
  }
  return 0;
}

// ---------------------------------------------------------------- bounds

// "a:b:k" (k equispaced points from a to b) or a comma-separated list.
inline std::vector<double> parse_upsilon_grid(const std::string& spec) {
  std::vector<double> g;
  if (spec.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::istringstream in(spec);
    std::string piece;
    while (std::getline(in, piece, ':')) {
      const auto v = csv::parse_number(csv::trim(piece));
      if (!v) throw InputError("bad --upsilon-grid '" + spec + "'");
      parts.push_back(*v);
    }
    if (parts.size() != 3 || parts[2] < 1 || parts[2] != std::floor(parts[2])) {
      throw InputError("--upsilon-grid range form is start:stop:count");
    }
    const auto k = static_cast<std::size_t>(parts[2]);
    for (std::size_t i = 0; i < k; ++i) {
      g.push_back(k == 1 ? parts[0] : parts[0] + (parts[1] - parts[0]) * static_cast<double>(i) / static_cast<double>(k - 1));
    }
  } else {
    std::istringstream in(spec);
    std::string piece;
    while (std::getline(in, piece, ',')) {
      const auto v = csv::parse_number(csv::trim(piece));
      if (!v) throw InputError("bad --upsilon-grid value '" + piece + "'");
      g.push_back(*v);
    }
  }
  if (g.empty()) throw InputError("--upsilon-grid is empty");
  for (double u : g) {
    if (!(u >= 0.0 && u <= 1.0)) throw InputError("--upsilon-grid values must lie in [0, 1]");
  }
  return g;
}

inline int cmd_bounds(const BoundsOptions& o, std::ostream& out) {
  const auto kind = o.dichotomize_mediator ? MediatorKind::continuous : MediatorKind::discrete;
  auto [data, dropped, fingerprint] = load(o.common, kind);
  json cuts = json::object();
  if (o.dichotomize_mediator) {
    auto d = median_dichotomize(data, o.common.mediator);
    cuts["mediator"] = d.cutpoint;
    data = std::move(d.data);
  }
  if (o.dichotomize_outcome) {
    auto d = median_dichotomize(data, o.common.outcome);
    cuts["outcome"] = d.cutpoint;
    data = std::move(d.data);
  }
  if (!has_binary_mediator(data)) {
    throw InputError("mediator '" + o.common.mediator + "' is not 0/1; pass --dichotomize-mediator");
  }
  if (!has_binary_outcome(data)) {
    throw InputError("outcome '" + o.common.outcome + "' is not 0/1; pass --dichotomize-outcome");
  }
  std::vector<int> arms;
  if (o.arm == "both") arms = {0, 1};
  else if (o.arm == "0") arms = {0};
  else if (o.arm == "1") arms = {1};
  else throw InputError("--t must be 0, 1 or both");

  auto grid = parse_upsilon_grid(o.upsilon_grid);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const auto probs = cell_probs(data);
  const unsigned threads = resolve_threads(o.common.threads);
  const auto& prefix = o.common.out_prefix;
  std::vector<std::string> outputs;

  json j;
  j["command"] = "bounds";
  j["n"] = data.n();
  j["cutpoints"] = cuts;
  j["arms"] = json::array();
  for (int t : arms) {
    const auto sweep = upsilon_sweep(probs, grid, t, threads);
    const auto sj = sjolander_bounds(probs, t);
    json a;
    a["t"] = t;
    a["crossing_upsilon"] = sweep.crossing_upsilon ? number(*sweep.crossing_upsilon) : json(nullptr);
    a["sjolander"] = json::array({number(sj.first), number(sj.second)});
    a["plugin"] = number(plugin_from_probs(probs, t));
    j["arms"].push_back(a);

    out << "t = " << t << ": plug-in " << csv::format_number(plugin_from_probs(probs, t)) << ", no-assumption bounds ["
        << csv::format_number(sj.first) << ", " << csv::format_number(sj.second) << "], zero first inside at upsilon = "
        << (sweep.crossing_upsilon ? csv::format_number(*sweep.crossing_upsilon) : std::string("never")) << "\n";
    out << "  upsilon      lower      upper\n";
    std::ostringstream c;
    c << "upsilon,lower,upper,status\n";
    for (const auto& b : sweep.bounds) {
      out << std::fixed << std::setprecision(4) << std::setw(9) << b.upsilon << std::setw(11) << b.lower
          << std::setw(11) << b.upper << "\n";
      c << csv::format_number(b.upsilon) << ',' << csv::format_number(b.lower) << ',' << csv::format_number(b.upper)
        << ',' << to_string(b.lp_status) << '\n';
    }
    out.unsetf(std::ios::floatfield);
    if (!prefix.empty()) {
      outputs.push_back(prefix + "_bounds_t" + std::to_string(t) + ".csv");
      write_text(outputs.back(), c.str());
    }
  }
  if (!prefix.empty()) {
    outputs.push_back(prefix + "_bounds.json");
    write_text(outputs.back(), j.dump(2) + "\n");
    auto opts = common_json(o.common);
    opts["dichotomize_mediator"] = o.dichotomize_mediator;
    opts["dichotomize_outcome"] = o.dichotomize_outcome;
    opts["upsilon_grid"] = o.upsilon_grid;
    opts["t"] = o.arm;
    write_manifest(prefix, "bounds", opts, fingerprint, o.common.seed, outputs);
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  SimParams params;
  std::string fingerprint_src;
  if (!o.params_file.empty()) {
    const auto text = csv::read_file(o.params_file);
    fingerprint_src += text;
    params = parse_sim_params(text);
  }
  for (const auto& kv : o.param_overrides) {
    fingerprint_src += "\n" + kv;
    params = parse_sim_params(kv, params);
  }
  if (!(o.level > 0.0 && o.level < 1.0)) throw InputError("--level must lie in (0, 1)");

  SimOptions so;
  so.sample_sizes = o.n_list;
  so.replicates = o.replicates;
  so.level = o.level;
  so.threads = resolve_threads(o.threads);
  so.estimators.clear();
  for (const auto& e : o.estimators) so.estimators.push_back(parse_sim_estimator(e));

  const auto rep = run_monte_carlo(params, so, RngStream(o.seed));
  out << report_table(rep);

  if (!o.out_prefix.empty()) {
    std::vector<std::string> outputs{o.out_prefix + "_simulation.csv", o.out_prefix + "_simulation.json"};
    write_text(outputs[0], report_csv(rep));
    json j;
    j["command"] = "simulate";
    j["params"] = {{"alpha2", params.alpha2}, {"beta2", params.beta2}, {"alpha3", params.alpha3},
                   {"beta3", params.beta3},   {"gamma", params.gamma}, {"kappa", params.kappa},
                   {"sigma3_sq", params.sigma3_sq}};
    j["true_acme"] = json::array({true_acme(params, 0), true_acme(params, 1)});
    j["replicates"] = o.replicates;
    j["level"] = o.level;
    j["rows"] = json::array();
    for (const auto& r : rep.rows) {
      j["rows"].push_back({{"estimator", std::string(to_string(r.estimator))},
                           {"t", r.t},
                           {"n", r.n},
                           {"bias", number(r.bias)},
                           {"rmse", number(r.rmse)},
                           {"coverage", number(r.coverage)},
                           {"replicates", r.replicates},
                           {"failures", r.failures}});
    }
    write_text(outputs[1], j.dump(2) + "\n");
    json opts;
    opts["params"] = j["params"];
    opts["n_list"] = o.n_list;
    opts["replicates"] = o.replicates;
    opts["estimators"] = o.estimators;
    opts["level"] = o.level;
    write_manifest(o.out_prefix, "simulate", opts, fnv1a_hex(fingerprint_src), o.seed, outputs);
  }
  return 0;
}

}  // namespace mediation::cli
