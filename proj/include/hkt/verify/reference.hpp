#pragma once

#include <span>
#include <vector>

#include "hkt/grad/tensor.hpp"
#include "hkt/model/config.hpp"
#include "hkt/model/params.hpp"

// Plain-loop encoders that share no code with the model: the two endpoints
// an HKT block collapses to when only level 0 contributes.
namespace hkt::verify::reference {

using grad::Tensor;

enum class Mixer { attention, conv };

struct Output {
  Tensor position_logits;  // T x C
  std::vector<double> logits;
};

// Embedding, then per layer x += W_O^(0) mix(LN1(x)) and x += FFN(LN2(x)),
// final LN, per-position classifier, mean over time. Attention is standard
// multi-head softmax(QK^T/sqrt(d_k))V (causal mask when config.causal); conv
// is the depthwise kernel over V = X W_V^T with zero (causal) or edge
// padding. Only level-0 weights are read.
Output encode(const model::ModelConfig& config, const model::ParamStore& params,
              std::span<const int> tokens, Mixer mixer);

}  // namespace hkt::verify::reference
