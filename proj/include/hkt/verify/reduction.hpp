#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hkt/model/config.hpp"

namespace hkt::verify {

struct ReductionCase {
  std::string name;
  std::size_t draws = 0;
  double max_abs_diff = 0.0;  // over logits and per-position logits
  bool passed = false;
};

// Each case draws fresh weights and tokens and compares the model with the
// matching plain-loop reference:
//   L=1, beta=1 vs multi-head attention
//   L=3, lambda=alpha=onehot(0), beta=1 vs attention on level-0 weights
//   L=1, beta=0 vs depthwise conv
//   L=3, alpha=onehot(0), beta=0 vs depthwise conv
// for both causal and bidirectional models.
std::vector<ReductionCase> reduction_suite(const model::ModelConfig& base, std::uint64_t seed,
                                           std::size_t draws = 10, double tol = 1e-9);

}  // namespace hkt::verify
