#include <gtest/gtest.h>

#include <cmath>

#include "hkt/error.hpp"
#include "hkt/model/hkt.hpp"
#include "hkt/verify/causal.hpp"
#include "hkt/verify/gradcheck.hpp"
#include "hkt/verify/ops_count.hpp"
#include "hkt/verify/reduction.hpp"
#include "hkt/verify/reference.hpp"

using namespace hkt;

namespace {

model::ModelConfig small(bool causal, std::size_t levels = 3) {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_levels = levels;
  c.n_layers = 2;
  c.max_seq_len = 16;
  c.causal = causal;
  return c;
}

}  // namespace

TEST(Leakage, CausalModelIsExact) {
  const model::HktModel m(small(true), 3);
  const auto r = verify::measure_leakage(m, 16, 3, 11);
  EXPECT_LE(r.max_leakage, 1e-12);
  EXPECT_EQ(r.per_trial.size(), 3u);
}

TEST(Leakage, SabotageIsDetected) {
  const model::HktModel m(small(true), 3);
  EXPECT_GT(verify::measure_leakage(m, 16, 2, 11, true).max_leakage, 1e-3);
}

TEST(Leakage, FlatAttentionControl) {
  auto c = small(true, 1);
  c.beta_mode = model::BetaMode::fixed1;
  const model::HktModel m(c, 4);
  EXPECT_LE(verify::measure_leakage(m, 8, 2, 1).max_leakage, 1e-12);
  EXPECT_GT(verify::measure_leakage(m, 8, 2, 1, true).max_leakage, 1e-3);
}

TEST(Leakage, RefusesBidirectional) {
  const model::HktModel m(small(false), 3);
  EXPECT_THROW(verify::measure_leakage(m, 16, 1, 1), ConfigError);
}

TEST(Epsilon, BoundFormula) {
  EXPECT_NEAR(verify::epsilon_bound(1.0, 2, 3), 1.0 / 7.0, 1e-15);
  EXPECT_EQ(verify::epsilon_bound(0.0, 2, 3), 0.0);
  EXPECT_TRUE(std::isinf(verify::epsilon_bound(2.0, 2, 3)));
}

TEST(Epsilon, ModelReport) {
  const model::HktModel m(small(true), 5);
  const auto r = verify::epsilon_causality(m);
  ASSERT_EQ(r.per_level.size(), 2u);
  EXPECT_GT(r.c_phi, 0.0);
  EXPECT_EQ(r.c_phi, std::max(r.per_level[0], r.per_level[1]));
}

TEST(OpCount, RatiosOnExactGrid) {
  model::ModelConfig c;
  const double expected[] = {1.0, 1.25, 1.3125, 1.328125};
  for (std::size_t L = 1; L <= 4; ++L) {
    c.n_levels = L;
    const auto r = verify::count_ops(c, 128);
    EXPECT_EQ(r.ratio_measured, expected[L - 1]);
    EXPECT_EQ(r.ratio_theory, expected[L - 1]);
    EXPECT_TRUE(r.exact_grid);
    EXPECT_EQ(r.flat_entries, 4u * 128 * 128);
    EXPECT_EQ(r.levels.size(), L);
  }
}

TEST(OpCount, FloorBelowTheoryOffGrid) {
  model::ModelConfig c;
  c.n_levels = 3;
  const auto r = verify::count_ops(c, 130);
  EXPECT_FALSE(r.exact_grid);
  // 130^2 + 65^2 + 32^2
  EXPECT_DOUBLE_EQ(r.ratio_measured, (16900.0 + 4225.0 + 1024.0) / 16900.0);
  EXPECT_LT(r.ratio_measured, r.ratio_theory);
}

TEST(Reduction, AllCasesMatchReference) {
  auto c = small(false);
  c.max_seq_len = 12;
  for (const auto& rc : verify::reduction_suite(c, 21, 3)) {
    EXPECT_TRUE(rc.passed) << rc.name << " diff " << rc.max_abs_diff;
    EXPECT_LE(rc.max_abs_diff, 1e-9) << rc.name;
  }
}

TEST(Reduction, ReferenceDiffersFromFullModel) {
  // Without the one-hot overrides a 3-level model is not plain attention.
  auto c = small(false);
  c.beta_mode = model::BetaMode::fixed1;
  model::HktModel m(c, 8);
  for (std::size_t i = 0; i < m.params().size(); ++i)
    if (m.params().name(i).find("gamma") != std::string::npos)
      for (auto& v : m.params().value(i).data()) v = 0.5;
  std::vector<int> tokens(16);
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = int(i % 17);
  const auto ref = verify::reference::encode(c, m.params(), tokens,
                                             verify::reference::Mixer::attention);
  const auto logits = m.predict_logits(tokens);
  double diff = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) diff = std::max(diff, std::abs(logits[j] - ref.logits[j]));
  EXPECT_GT(diff, 1e-6);
}

TEST(GradCheck, PrimitiveSuite) {
  const auto checks = verify::primitive_suite(5);
  EXPECT_GE(checks.size(), 30u);
  for (const auto& p : checks) EXPECT_LT(p.max_rel_error, 1e-5) << p.name;
}

TEST(GradCheck, TinyModelAllCoordinates) {
  auto c = small(false, 2);
  c.d_model = 8;
  c.n_layers = 1;
  c.max_seq_len = 6;
  c.n_classes = 3;
  c.vocab_size = 5;
  c.div_loss = true;
  c.mono_loss = false;
  const auto r = verify::model_gradient_check(c, 2, 0);
  EXPECT_GT(r.coordinates, 500u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(GradCheck, CausalModelSampled) {
  auto c = small(true);
  const auto r = verify::model_gradient_check(c, 3, 2);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}
