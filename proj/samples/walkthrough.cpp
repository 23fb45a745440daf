// One pass through the library on a simulated study: draw data from the
// probit / lognormal design, estimate the ACME two ways, see how far the
// estimate moves under error correlation, then bound it for binary M and Y.
//
//   walkthrough [n] [seed]

#include <cstdio>
#include <cstdlib>

#include "mediation/mediation.hpp"

using namespace mediation;

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 1000;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  const SimParams params;
  const Dataset data = generate_dataset(params, n, RngStream(seed));
  std::printf("n = %zu, true ACME %.4f (t=0) %.4f (t=1)\n\n", data.n(), true_acme(params, 0), true_acme(params, 1));

  // linear model with interaction, and the cell plug-in
  const auto fit = fit_lsem(data, true, false);
  const auto cells = cell_statistics(data);
  std::printf("%-4s %-22s %-22s\n", "t", "LSEM (Delta CI)", "plug-in (normal CI)");
  for (int t = 0; t < 2; ++t) {
    const auto p = acme_product(fit, t);
    const auto np = nonparametric_sim_estimate(data, t);
    std::printf("%-4d %6.3f [%6.3f, %6.3f]  %6.3f [%6.3f, %6.3f]\n", t, p.point, p.ci_low, p.ci_high, np.point,
                np.ci_low, np.ci_high);
  }
  std::printf("interaction test p = %.3g\n\n", test_no_interaction(fit));

  // sensitivity uses the model without interaction
  const auto report = rho_sweep(data, default_rho_grid(-0.9, 0.9, 19));
  std::printf("rho sweep: ACME is zero at rho = %.3f\n", report.zero_crossing_rho);
  for (const auto& pt : report.curve) {
    if (pt.converged) std::printf("  rho %+5.2f  acme %7.3f  se %.3f\n", pt.rho, pt.acme, pt.se);
  }

  // bounds need a binary outcome too
  const auto binary = median_dichotomize(data, "Y");
  const auto probs = cell_probs(binary.data);
  std::printf("\noutcome split at %.3f\n", binary.cutpoint);
  for (int t = 0; t < 2; ++t) {
    const auto sweep = upsilon_sweep(probs, {0.0, 0.25, 0.5, 1.0}, t);
    std::printf("t=%d plug-in %.3f\n", t, plugin_from_probs(probs, t));
    for (const auto& b : sweep.bounds) std::printf("  upsilon %.2f  [%.3f, %.3f]\n", b.upsilon, b.lower, b.upper);
  }
}
