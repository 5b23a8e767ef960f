#include "hkt/verify/ops_count.hpp"

#include <cmath>

#include "hkt/error.hpp"
#include "hkt/model/hkt.hpp"

namespace hkt::verify {

double ratio_theory(std::size_t stride, std::size_t levels) {
  double r = 0.0;
  for (std::size_t l = 0; l < levels; ++l) r += std::pow(double(stride), -2.0 * double(l));
  return r;
}

OpCount count_ops(const model::ModelConfig& config, std::size_t T, std::uint64_t seed) {
  model::ModelConfig c = config;
  c.max_seq_len = std::max(c.max_seq_len, T);
  c.validate();
  const model::HktModel m(c, seed);
  std::vector<int> tokens(T);
  num::Prng rng(seed);
  for (auto& t : tokens) t = int(rng.below(c.vocab_size));
  model::Trace trace;
  model::ForwardOptions opts;
  opts.trace = &trace;
  m.predict_logits(tokens, opts);

  const auto& lt = trace.layers.at(0);
  OpCount r;
  r.T = T;
  const std::size_t H = c.n_heads, d = c.d_model, L = c.n_levels;
  std::uint64_t sq = 0;
  for (std::size_t l = 0; l < lt.scores.size(); ++l) {
    LevelOps lv;
    lv.level = l;
    lv.length = lt.scores[l].at(0).rows();
    lv.head_dim = c.level_head_dim(l);
    for (const auto& s : lt.scores[l]) lv.score_entries += s.rows() * s.cols();
    lv.score_macs = lv.score_entries * lv.head_dim;
    sq += std::uint64_t(lv.length) * lv.length;
    r.score_entries += lv.score_entries;
    r.levels.push_back(lv);
  }
  r.flat_entries = std::uint64_t(H) * T * T;
  r.ratio_measured = double(sq) / (double(T) * double(T));
  r.ratio_theory = ratio_theory(c.stride, L);
  r.exact_grid = T % c.level_factor(L - 1) == 0;

  const std::size_t k = c.conv_kernel, dh = c.head_dim();
  std::uint64_t other = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const std::uint64_t Tl = r.levels[l].length, dl = c.level_dim(l);
    if (l > 0) {
      const std::uint64_t din = c.level_dim(l - 1);
      other += Tl * din * k + Tl * din * dl;  // depthwise + pointwise downsample
    }
    other += Tl * dl * 2 * H * r.levels[l].head_dim;  // Q, K
    other += Tl * dl * d;                            // V
    other += std::uint64_t(H) * T * Tl * dh;          // pooled probabilities times V
    other += std::uint64_t(T) * d * k;                // conv branch
    other += std::uint64_t(T) * d * d;                // W_O
  }
  other += 8ull * T * d * d;  // FFN
  r.other_macs = other;
  return r;
}

}  // namespace hkt::verify
