#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mediation/mediation.hpp"

namespace testing_util {

using namespace mediation;

inline std::string temp_file(const std::string& name, const std::string& contents) {
  auto path = std::filesystem::temp_directory_path() / ("mediation_test_" + name);
  std::ofstream(path, std::ios::binary) << contents;
  return path.string();
}

inline ColumnMapping mapping(MediatorKind kind = MediatorKind::discrete, std::vector<std::string> covs = {}) {
  return {"T", "M", "Y", std::move(covs), kind};
}

inline Dataset make(std::vector<Record> recs, MediatorKind kind = MediatorKind::discrete,
                    std::vector<std::string> covs = {}) {
  return Dataset::build(mapping(kind, std::move(covs)), std::move(recs));
}

// Continuous mediator and outcome from a noisy LSEM with interaction.
inline Dataset random_lsem(std::size_t n, RngStream rng, double b2 = 1.0, double g = 0.7, double k = 0.0,
                           double noise_m = 1.0, double noise_y = 1.0) {
  std::vector<Record> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = recs[i];
    r.treatment = i % 2 == 0 ? 1 : 0;
    r.mediator = 0.3 + b2 * r.treatment + noise_m * rng.normal();
    r.outcome = -0.2 + 0.4 * r.treatment + g * r.mediator + k * r.treatment * r.mediator + noise_y * rng.normal();
  }
  return make(std::move(recs), MediatorKind::continuous);
}

// Binary mediator, real outcome, no covariates; every (t, m) cell gets at
// least two units.
inline Dataset random_binary_mediator(std::size_t n, RngStream rng) {
  const double p0 = 0.2 + 0.5 * rng.uniform();
  const double p1 = 0.2 + 0.5 * rng.uniform();
  const double mu[2][2] = {{rng.normal(), rng.normal()}, {rng.normal(), rng.normal()}};
  std::vector<Record> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = recs[i];
    r.treatment = i % 2 == 0 ? 1 : 0;
    const std::size_t slot = i / 2;
    int m;
    if (slot < 4) m = static_cast<int>(slot / 2);  // forced cell coverage
    else m = rng.uniform() < (r.treatment ? p1 : p0) ? 1 : 0;
    r.mediator = m;
    r.outcome = mu[r.treatment][m] + rng.normal();
  }
  return make(std::move(recs));
}

}  // namespace testing_util
