#include "hkt/verify/reduction.hpp"

#include <cmath>

#include "hkt/model/hkt.hpp"
#include "hkt/verify/reference.hpp"

namespace hkt::verify {

namespace {

struct Setup {
  std::string name;
  std::size_t levels;
  model::BetaMode beta;
  bool causal;
};

}  // namespace

std::vector<ReductionCase> reduction_suite(const model::ModelConfig& base, std::uint64_t seed,
                                           std::size_t draws, double tol) {
  const std::vector<Setup> setups = {
      {"attention_L1", 1, model::BetaMode::fixed1, false},
      {"attention_L1_causal", 1, model::BetaMode::fixed1, true},
      {"attention_L3_onehot", 3, model::BetaMode::fixed1, false},
      {"attention_L3_onehot_causal", 3, model::BetaMode::fixed1, true},
      {"conv_L1", 1, model::BetaMode::fixed0, false},
      {"conv_L1_causal", 1, model::BetaMode::fixed0, true},
      {"conv_L3_onehot", 3, model::BetaMode::fixed0, false},
      {"conv_L3_onehot_causal", 3, model::BetaMode::fixed0, true},
  };
  std::vector<ReductionCase> out;
  num::Prng rng(seed);
  for (const auto& s : setups) {
    model::ModelConfig c = base;
    c.n_levels = s.levels;
    c.beta_mode = s.beta;
    c.causal = s.causal;
    c.dropout = 0.0;
    c.validate();
    const auto mixer = s.beta == model::BetaMode::fixed1 ? reference::Mixer::attention
                                                         : reference::Mixer::conv;
    ReductionCase rc;
    rc.name = s.name;
    rc.draws = draws;
    for (std::size_t k = 0; k < draws; ++k) {
      const model::HktModel m(c, rng.next_u64());
      std::vector<int> tokens(c.max_seq_len);
      for (auto& t : tokens) t = int(rng.below(c.vocab_size));

      model::ForwardOptions opts;
      if (s.levels > 1) {
        std::vector<double> onehot(s.levels, 0.0);
        onehot[0] = 1.0;
        opts.lambda_override = onehot;
        opts.alpha_override = onehot;
      }
      grad::Graph g;
      model::Bound p(g, m.params(), false);
      const auto fwd = model::encoder_forward(p, c, tokens, opts);
      const auto ref = reference::encode(c, m.params(), tokens, mixer);
      double diff = grad::max_abs_diff(fwd.position_logits.value(), ref.position_logits);
      for (std::size_t j = 0; j < ref.logits.size(); ++j)
        diff = std::max(diff, std::abs(fwd.logits.value()[j] - ref.logits[j]));
      rc.max_abs_diff = std::max(rc.max_abs_diff, diff);
    }
    rc.passed = rc.max_abs_diff <= tol;
    out.push_back(rc);
  }
  return out;
}

}  // namespace hkt::verify
