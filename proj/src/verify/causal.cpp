#include "hkt/verify/causal.hpp"

#include <cmath>
#include <limits>

#include "hkt/error.hpp"
#include "hkt/num/linalg.hpp"

namespace hkt::verify {

using grad::Graph;
using grad::Tensor;
using grad::Var;

LeakageReport measure_leakage(const model::HktModel& m, std::size_t T, std::size_t trials,
                              std::uint64_t seed, bool sabotage) {
  const auto& c = m.config();
  if (!c.causal) throw ConfigError("leakage is only defined for causal models");
  if (T == 0 || trials == 0) throw ConfigError("leakage needs T > 0 and trials > 0");
  LeakageReport r;
  r.T = T;
  r.trials = trials;
  r.sabotaged = sabotage;
  num::Prng rng(seed);
  model::ForwardOptions opts;
  opts.sabotage_mask = sabotage;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Tensor x0 = Tensor::matrix(T, c.d_model);
    for (auto& v : x0.data()) v = rng.normal();
    Graph g;
    model::Bound p(g, m.params(), false);
    const Var x = g.leaf(x0, true);
    const auto fwd = model::encoder_forward_embedded(p, c, x, opts);
    double worst = 0.0;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      g.clear_grads();
      g.backward(grad::sum(grad::slice_rows(fwd.position_logits, t, 1)));
      const Tensor& gx = x.grad();
      for (std::size_t u = t + 1; u < T; ++u) {
        double s = 0.0;
        for (std::size_t j = 0; j < c.d_model; ++j) s += gx(u, j) * gx(u, j);
        worst = std::max(worst, std::sqrt(s));
      }
    }
    r.per_trial.push_back(worst);
    r.max_leakage = std::max(r.max_leakage, worst);
  }
  return r;
}

double epsilon_bound(double c_phi, std::size_t stride, std::size_t levels) {
  const double sl = std::pow(double(stride), double(levels));
  const double cl = std::pow(c_phi, double(levels));
  if (c_phi >= double(stride)) return std::numeric_limits<double>::infinity();
  return cl / (sl - cl);
}

EpsilonReport epsilon_causality(const model::HktModel& m) {
  const auto& c = m.config();
  EpsilonReport r;
  r.per_level.assign(c.n_levels > 1 ? c.n_levels - 1 : 0, 0.0);
  for (std::size_t layer = 0; layer < c.n_layers; ++layer)
    for (std::size_t l = 1; l < c.n_levels; ++l) {
      const Tensor& dw = m.params().at(model::level_key(layer, l, "down.dw"));
      double row_max = 0.0;
      for (std::size_t i = 0; i < dw.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dw.cols(); ++j) s += std::abs(dw(i, j));
        row_max = std::max(row_max, s);
      }
      const double cl = row_max * num::operator_norm(m.params().at(model::level_key(layer, l, "down.pw")));
      r.per_level[l - 1] = std::max(r.per_level[l - 1], cl);
      r.c_phi = std::max(r.c_phi, cl);
    }
  r.bound = epsilon_bound(r.c_phi, c.stride, c.n_levels);
  return r;
}

}  // namespace hkt::verify
