#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hkt/model/hkt.hpp"

namespace hkt::verify {

struct LeakageReport {
  std::size_t T = 0;
  std::size_t trials = 0;
  bool sabotaged = false;
  // max over trials, t and t' > t of ||d f_t / d x_t'||_2
  double max_leakage = 0.0;
  std::vector<double> per_trial;
};

// Per-position logits f_t differentiated with respect to a random embedded
// input X (T x d). Throws ConfigError for non-causal models.
LeakageReport measure_leakage(const model::HktModel& model, std::size_t T, std::size_t trials,
                              std::uint64_t seed, bool sabotage = false);

// Geometric-series bound C^L / (s^L - C^L); +inf when C >= s.
double epsilon_bound(double c_phi, std::size_t stride, std::size_t levels);

struct EpsilonReport {
  std::vector<double> per_level;  // max_c ||dw_c||_1 * ||PW||_2, levels >= 1
  double c_phi = 0.0;
  double bound = 0.0;
};

// Uses the largest C over all layers.
EpsilonReport epsilon_causality(const model::HktModel& model);

}  // namespace hkt::verify
