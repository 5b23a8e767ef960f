#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hkt/grad/ops.hpp"
#include "hkt/model/config.hpp"
#include "hkt/model/params.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::model {

// Detached values captured during a forward pass.
struct LayerTrace {
  std::vector<Tensor> levels;               // X^(l), T_l x d_l
  std::vector<std::vector<Tensor>> scores;  // [level][head], unmasked S^(l)
  std::vector<double> lambda;               // L
  Tensor alpha;                             // 1 x L, or T x L when causal
  Tensor beta;                              // H x L
};

struct Trace {
  Tensor embedding;
  std::vector<LayerTrace> layers;
};

struct ForwardOptions {
  bool training = false;  // enables dropout; needs rng when dropout > 0
  num::Prng* rng = nullptr;
  bool sabotage_mask = false;  // drop the causal mask (negative control)
  std::optional<std::vector<double>> lambda_override;
  std::optional<std::vector<double>> alpha_override;
  Trace* trace = nullptr;
};

struct ForwardResult {
  Var embedding;        // T x d
  Var position_logits;  // T x C, classifier applied before pooling
  Var logits;           // 1 x C
  Var regularizer;      // scalar; invalid when both lambda losses are off
};

// ---- level machinery (one HKT layer) ----

// X^(0) = x0, X^(l) = GELU(LN(pointwise(depthwise_s(X^(l-1))))).
std::vector<Var> downsample_cascade(const Var& x0, const Bound& p, const ModelConfig& c,
                                    std::size_t layer);

// [level][head] of Q_h K_h^T / sqrt(d_k^(l)), unmasked.
std::vector<std::vector<Var>> level_scores(const std::vector<Var>& stack, const Bound& p,
                                           const ModelConfig& c, std::size_t layer);

// sum_l lambda_l * S^(l)[i / s^l, j / s^l] for one head. lambda is 1 x L.
Var fuse_scores(const std::vector<Var>& per_level, const Var& lambda, std::size_t T,
                std::size_t stride);

// Detached fusion; with `causal` every j > i entry is -inf.
Tensor fuse_scores(const std::vector<Tensor>& per_level, std::span<const double> lambda,
                   std::size_t T, std::size_t stride, bool causal);

struct HybridBranches {
  Var attention;  // softmax(S_hier) . up(V)
  Var conv;       // depthwise causal conv of up(V)
  Var blended;    // beta * attention + (1 - beta) * conv
};

// One head at one level. probs: T x T row-stochastic; values: T_l x d_h;
// conv_w: d_h x k; beta: one value. An invalid probs or conv_w drops that
// branch and `blended` is the other one, beta unused.
HybridBranches hybrid_head(const Var& probs, const Var& values, const Var& conv_w,
                           const Var& beta, std::size_t T, std::size_t factor,
                           grad::ConvPad pad);

// sum_l alpha_l * W_O^(l) A^(l). alpha is 1 x L (shared by all positions) or
// T x L (per position).
Var dynamic_fusion(const std::vector<Var>& level_outputs, const std::vector<Var>& wo,
                   const Var& alpha);

// alpha = softmax(MLP(pooled)); pooled is 1 x d or T x d.
Var fusion_weights(const Var& pooled, const Bound& p, const ModelConfig& c, std::size_t layer);

// One full block: pre-LN HKT attention + residual, pre-LN FFN + residual.
Var hkt_layer(const Var& x, const Bound& p, const ModelConfig& c, std::size_t layer,
              const ForwardOptions& opts, std::vector<Var>* lambdas = nullptr);

// ---- whole encoder ----

ForwardResult encoder_forward(const Bound& p, const ModelConfig& c, std::span<const int> tokens,
                              const ForwardOptions& opts = {});
// Same, starting from an embedded sequence x (T x d).
ForwardResult encoder_forward_embedded(const Bound& p, const ModelConfig& c, const Var& x,
                                       const ForwardOptions& opts = {});

// div: sum lambda log lambda; mono: sum_l max(0, lambda_{l+1} - lambda_l).
Var lambda_regularizer(const Var& lambda, bool div, bool mono);

class HktModel {
 public:
  HktModel(ModelConfig config, std::uint64_t seed);
  HktModel(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Eval-mode logits on a fresh graph.
  std::vector<double> predict_logits(std::span<const int> tokens,
                                     const ForwardOptions& opts = {}) const;
  int predict(std::span<const int> tokens) const;

  void save(const std::filesystem::path& path) const { save_checkpoint(path, config_, params_); }
  static HktModel load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  ParamStore params_;
};

}  // namespace hkt::model
