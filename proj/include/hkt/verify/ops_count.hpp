#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hkt/model/config.hpp"

namespace hkt::verify {

struct LevelOps {
  std::size_t level = 0;
  std::size_t length = 0;    // T_l
  std::size_t head_dim = 0;  // d_k^(l)
  std::uint64_t score_entries = 0;  // H * T_l^2, one layer
  std::uint64_t score_macs = 0;     // score_entries * d_k^(l)
};

struct OpCount {
  std::size_t T = 0;
  std::vector<LevelOps> levels;
  std::uint64_t score_entries = 0;  // all levels, one layer
  std::uint64_t flat_entries = 0;   // H * T^2
  // sum_l T_l^2 / T^2, read off the traced score shapes
  double ratio_measured = 0.0;
  // sum_l s^(-2l)
  double ratio_theory = 0.0;
  // T divisible by s^(L-1): measured equals theory exactly
  bool exact_grid = false;
  // projections, value path, convolutions, FFN; one layer
  std::uint64_t other_macs = 0;
};

// Runs one traced forward at length T and counts what was materialised.
OpCount count_ops(const model::ModelConfig& config, std::size_t T, std::uint64_t seed = 1);

double ratio_theory(std::size_t stride, std::size_t levels);

}  // namespace hkt::verify
