#include "hkt/train/optim.hpp"

#include <cmath>
#include <numbers>

#include "hkt/error.hpp"

namespace hkt::train {

OneCycle::OneCycle(double peak, std::size_t total_steps, std::size_t warmup_steps, double div,
                   double final_div)
    : peak_(peak), div_(div), final_div_(final_div), total_(total_steps), warmup_(warmup_steps) {
  if (total_steps == 0) throw ConfigError("one-cycle schedule needs at least one step");
  if (warmup_steps >= total_steps) throw ConfigError("warmup must be shorter than the run");
  if (!(peak > 0.0) || !(div >= 1.0) || !(final_div >= 1.0))
    throw ConfigError("one-cycle needs peak > 0, div >= 1, final_div >= 1");
}

double OneCycle::lr(std::size_t step) const {
  const double start = peak_ / div_, end = peak_ / final_div_;
  if (step < warmup_) return start + (peak_ - start) * double(step) / double(warmup_);
  const std::size_t span = total_ - 1 - warmup_;
  if (span == 0) return peak_;
  const double p = std::min(1.0, double(step - warmup_) / double(span));
  return end + (peak_ - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

AdamW::AdamW(const model::ParamStore& params, AdamWOptions options) : o_(options) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.value(i).shape(), 0.0);
    v_.emplace_back(params.value(i).shape(), 0.0);
  }
}

void AdamW::step(model::ParamStore& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != m_.size()) throw DimensionError("AdamW: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(o_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(o_.beta2, double(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    if (g.size() != p.size()) throw DimensionError("AdamW: gradient shape mismatch for " + params.name(i));
    const double decay = decays(p) ? lr * o_.weight_decay : 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = o_.beta1 * m_[i][j] + (1.0 - o_.beta1) * g[j];
      v_[i][j] = o_.beta2 * v_[i][j] + (1.0 - o_.beta2) * g[j] * g[j];
      p[j] -= decay * p[j];
      p[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + o_.eps);
    }
  }
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  const double n = global_norm(grads);
  if (n > max_norm) {
    const double f = max_norm / n;
    for (auto& g : grads)
      for (double& v : g.data()) v *= f;
  }
  return n;
}

}  // namespace hkt::train
