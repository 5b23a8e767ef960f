#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hkt::verify {

// Regression of f(X) = <x0, x2> + <x0, x1> on T = 4 random inputs, one
// single-head block per model.
struct WitnessOptions {
  std::size_t d = 4;
  std::size_t n_train = 2048;
  std::size_t n_test = 256;
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  double peak_lr = 3e-3;
  std::size_t seeds = 10;
  std::uint64_t seed = 1;
  double required_ratio = 5.0;
};

struct WitnessModelResult {
  std::string name;  // hkt, flat, conv
  std::size_t parameters = 0;
  std::vector<double> test_mse;  // per seed
  double mean_mse = 0.0;
};

struct WitnessReport {
  std::vector<WitnessModelResult> models;  // hkt first
  double target_variance = 0.0;
  // best baseline mean MSE / HKT mean MSE
  double ratio = 0.0;
  // seeds where HKT beats both baselines by required_ratio
  std::size_t seed_wins = 0;
  bool passed = false;
};

WitnessReport witness_separation(const WitnessOptions& opts = {});

}  // namespace hkt::verify
