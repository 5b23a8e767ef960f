#include "hkt/verify/witness.hpp"

#include <algorithm>

#include "hkt/data/dataset.hpp"
#include "hkt/grad/ops.hpp"
#include "hkt/model/hkt.hpp"
#include "hkt/train/optim.hpp"

namespace hkt::verify {

namespace {

using grad::Graph;
using grad::Tensor;
using grad::Var;

constexpr std::size_t kT = 4;

struct Sample {
  Tensor x;
  double y;
};

std::vector<Sample> draw(std::size_t n, std::size_t d, num::Prng& rng) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s{Tensor::matrix(kT, d), 0.0};
    for (auto& v : s.x.data()) v = rng.normal();
    for (std::size_t j = 0; j < d; ++j) s.y += s.x(0, j) * (s.x(2, j) + s.x(1, j));
    out.push_back(std::move(s));
  }
  return out;
}

model::ModelConfig witness_config(const std::string& kind, std::size_t d) {
  model::ModelConfig c;
  c.d_model = d;
  c.n_heads = 1;
  c.n_layers = 1;
  c.stride = 2;
  c.max_seq_len = kT;
  c.n_classes = 2;  // the smallest head allowed; output 0 is the prediction
  c.vocab_size = 1;
  c.causal = false;
  c.n_levels = kind == "hkt" ? 2 : 1;
  if (kind == "flat") c.beta_mode = model::BetaMode::fixed1;
  if (kind == "conv") c.beta_mode = model::BetaMode::fixed0;
  c.validate();
  return c;
}

Var predict(const model::Bound& p, const model::ModelConfig& c, const Tensor& x) {
  Graph& g = p.graph();
  return grad::element(model::encoder_forward_embedded(p, c, g.constant(x)).logits, 0);
}

double mse(const model::ParamStore& ps, const model::ModelConfig& c,
           const std::vector<Sample>& data) {
  double s = 0.0;
  for (const auto& d : data) {
    Graph g;
    const model::Bound p(g, ps, false);
    const double e = predict(p, c, d.x).value().item() - d.y;
    s += e * e;
  }
  return s / double(data.size());
}

// Used parameters only: the unused branch of a fixed-beta model is not
// counted.
std::size_t count_params(const model::ParamStore& ps, const model::ModelConfig& c) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& name = ps.name(i);
    if (name == "embed") continue;
    if (c.beta_mode == model::BetaMode::fixed0 &&
        (name.ends_with(".wq") || name.ends_with(".wk")))
      continue;
    if (c.beta_mode == model::BetaMode::fixed1 && name.ends_with(".conv")) continue;
    if (c.beta_mode != model::BetaMode::learned && name.ends_with("gamma_tilde")) continue;
    n += ps.value(i).size();
  }
  return n;
}

double train_one(const model::ModelConfig& c, const WitnessOptions& o, std::uint64_t seed,
                 const std::vector<Sample>& tr, const std::vector<Sample>& te) {
  model::ParamStore ps = model::init_params(c, seed);
  num::Prng shuffle(seed ^ 0x5bd1e995ull);
  const std::size_t per_epoch = (tr.size() + o.batch_size - 1) / o.batch_size;
  const train::OneCycle sched(o.peak_lr, per_epoch * o.epochs, per_epoch * std::max<std::size_t>(1, o.epochs / 10));
  train::AdamW opt(ps, {0.9, 0.999, 1e-8, 0.0});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    for (const auto& batch : data::batches(tr.size(), o.batch_size, shuffle)) {
      std::vector<Tensor> grads;
      for (std::size_t i = 0; i < ps.size(); ++i) grads.emplace_back(ps.value(i).shape(), 0.0);
      for (std::size_t idx : batch) {
        Graph g;
        const model::Bound p(g, ps, true);
        const Var err = grad::sub(predict(p, c, tr[idx].x), g.constant(Tensor::scalar(tr[idx].y)));
        g.backward(grad::sum(grad::mul(err, err)));
        for (std::size_t i = 0; i < grads.size(); ++i) {
          const Tensor& gi = p.var(i).grad();
          for (std::size_t j = 0; j < gi.size(); ++j) grads[i][j] += gi[j] / double(batch.size());
        }
      }
      train::clip_global_norm(grads, 1.0);
      opt.step(ps, grads, sched.lr(step++));
    }
  }
  return mse(ps, c, te);
}

}  // namespace

WitnessReport witness_separation(const WitnessOptions& o) {
  WitnessReport r;
  const std::vector<std::string> kinds = {"hkt", "flat", "conv"};
  for (const auto& k : kinds) {
    const auto c = witness_config(k, o.d);
    r.models.push_back({k, count_params(model::init_params(c, 0), c), {}, 0.0});
  }
  num::Prng root(o.seed);
  double var_sum = 0.0;
  for (std::size_t s = 0; s < o.seeds; ++s) {
    num::Prng rng = root.split(s);
    const auto tr = draw(o.n_train, o.d, rng);
    const auto te = draw(o.n_test, o.d, rng);
    double mean = 0.0, var = 0.0;
    for (const auto& x : te) mean += x.y / double(te.size());
    for (const auto& x : te) var += (x.y - mean) * (x.y - mean) / double(te.size());
    var_sum += var;
    const std::uint64_t init = rng.next_u64();
    for (std::size_t k = 0; k < kinds.size(); ++k)
      r.models[k].test_mse.push_back(train_one(witness_config(kinds[k], o.d), o, init, tr, te));
    const double h = r.models[0].test_mse.back();
    if (r.models[1].test_mse.back() >= o.required_ratio * h &&
        r.models[2].test_mse.back() >= o.required_ratio * h)
      ++r.seed_wins;
  }
  for (auto& m : r.models) {
    for (double v : m.test_mse) m.mean_mse += v;
    m.mean_mse /= double(m.test_mse.size());
  }
  r.target_variance = var_sum / double(o.seeds);
  const double best_base = std::min(r.models[1].mean_mse, r.models[2].mean_mse);
  r.ratio = best_base / r.models[0].mean_mse;
  r.passed = r.ratio >= o.required_ratio;
  return r;
}

}  // namespace hkt::verify
