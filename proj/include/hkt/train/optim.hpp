#pragma once

#include <cstddef>
#include <vector>

#include "hkt/grad/tensor.hpp"
#include "hkt/model/params.hpp"

namespace hkt::train {

using grad::Tensor;

// Linear warmup from peak/div to peak, then cosine down to peak/final_div at
// the last step.
class OneCycle {
 public:
  OneCycle(double peak, std::size_t total_steps, std::size_t warmup_steps, double div = 25.0,
           double final_div = 1e4);
  double lr(std::size_t step) const;
  std::size_t total_steps() const { return total_; }

 private:
  double peak_, div_, final_div_;
  std::size_t total_, warmup_;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay: p <- p - lr*wd*p, then the Adam step. Single-row
// tensors (biases, layernorm, fusion logits) are not decayed.
class AdamW {
 public:
  AdamW(const model::ParamStore& params, AdamWOptions options = {});
  void step(model::ParamStore& params, const std::vector<Tensor>& grads, double lr);
  std::size_t steps() const { return t_; }
  static bool decays(const Tensor& p) { return p.rows() > 1; }

 private:
  AdamWOptions o_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

double global_norm(const std::vector<Tensor>& grads);
// Scales grads so their global norm is at most max_norm; returns the norm
// before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace hkt::train
