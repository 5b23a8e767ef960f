#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hkt/data/listops.hpp"
#include "hkt/error.hpp"
#include "hkt/train/optim.hpp"
#include "hkt/train/sweep.hpp"
#include "hkt/train/trainer.hpp"

using namespace hkt;
using grad::Tensor;

namespace {

model::ModelConfig tiny() {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_levels = 2;
  c.n_layers = 1;
  c.max_seq_len = 16;
  return c;
}

data::ListOpsSplits tiny_data(std::size_t n_train) {
  data::ListOpsSpec s;
  s.seq_len = 16;
  s.max_depth = 2;
  s.max_arity = 3;
  s.n_train = n_train;
  s.n_val = 16;
  s.n_test = 16;
  s.seed = 9;
  return data::generate_listops(s);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(OneCycle, Shape) {
  const train::OneCycle s(1e-2, 100, 20);
  EXPECT_NEAR(s.lr(0), 1e-2 / 25.0, 1e-18);
  EXPECT_NEAR(s.lr(20), 1e-2, 1e-18);
  EXPECT_LE(s.lr(99), 1e-2 / 1e3);
  EXPECT_NEAR(s.lr(99), 1e-2 / 1e4, 1e-18);
  for (std::size_t i = 1; i <= 20; ++i) EXPECT_GT(s.lr(i), s.lr(i - 1));
  for (std::size_t i = 21; i < 100; ++i) EXPECT_LT(s.lr(i), s.lr(i - 1));
}

TEST(OneCycle, RejectsBadWarmup) {
  EXPECT_THROW(train::OneCycle(1e-3, 10, 10), ConfigError);
  EXPECT_THROW(train::OneCycle(1e-3, 0, 0), ConfigError);
}

TEST(AdamW, ZeroGradientShrinksByLrTimesDecay) {
  model::ParamStore ps;
  ps.add("w", Tensor::from_rows({{1.0, -2.0}, {0.5, 4.0}}));
  ps.add("b", Tensor::from_rows({{3.0, 1.0}}));
  train::AdamW opt(ps, {0.9, 0.999, 1e-8, 0.1});
  const std::vector<Tensor> zero = {Tensor::matrix(2, 2), Tensor::matrix(1, 2)};
  const Tensor w0 = ps.at("w");
  opt.step(ps, zero, 0.01);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(ps.at("w")[j], w0[j] - 0.01 * 0.1 * w0[j]);
  EXPECT_EQ(ps.at("b")[0], 3.0);
}

TEST(AdamW, FirstStepMovesByLr) {
  model::ParamStore ps;
  ps.add("w", Tensor::from_rows({{0.0, 0.0}, {0.0, 0.0}}));
  train::AdamW opt(ps, {0.9, 0.999, 0.0, 0.0});
  opt.step(ps, {Tensor::from_rows({{2.0, -3.0}, {1e-3, -5.0}})}, 0.1);
  EXPECT_NEAR(ps.at("w")[0], -0.1, 1e-15);
  EXPECT_NEAR(ps.at("w")[1], 0.1, 1e-15);
  EXPECT_NEAR(ps.at("w")[2], -0.1, 1e-15);
}

TEST(Clip, InjectedNormTen) {
  std::vector<Tensor> g = {Tensor::from_rows({{6.0, 0.0}}), Tensor::from_rows({{0.0}, {8.0}})};
  EXPECT_DOUBLE_EQ(train::clip_global_norm(g, 1.0), 10.0);
  EXPECT_NEAR(train::global_norm(g), 1.0, 1e-9);
  std::vector<Tensor> small = {Tensor::from_rows({{0.3, 0.4}})};
  train::clip_global_norm(small, 1.0);
  EXPECT_EQ(small[0][0], 0.3);
}

TEST(TrainConfig, Validation) {
  train::TrainConfig c;
  c.warmup_epochs = c.epochs;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.clip_norm = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  EXPECT_EQ(train::TrainConfig::from_map(c.to_map()), c);
  EXPECT_THROW(train::TrainConfig::from_map({{"bogus", "1"}}), ConfigError);
  EXPECT_THROW(train::TrainConfig::from_map({{"epochs", "-3"}}), ConfigError);
}

TEST(Ablation, Flags) {
  const model::ModelConfig base;
  EXPECT_EQ(train::apply_ablation(base, "no_hierarchy").n_levels, 1u);
  EXPECT_EQ(train::apply_ablation(base, "beta_fixed0").beta_mode, model::BetaMode::fixed0);
  EXPECT_EQ(train::apply_ablation(base, "alpha_uniform").alpha_mode, model::AlphaMode::uniform);
  EXPECT_EQ(train::apply_ablation(base, "full"), base);
  EXPECT_THROW(train::apply_ablation(base, "nope"), ConfigError);
}

TEST(Train, RejectsIncompatibleData) {
  auto d = tiny_data(8);
  auto c = tiny();
  c.n_classes = 5;
  model::HktModel m(c, 1);
  train::TrainConfig t;
  t.epochs = 3;
  EXPECT_THROW(train::train(m, {&d.train, &d.val, nullptr}, t), ConfigError);
}

TEST(Train, SeedDeterminism) {
  auto d = tiny_data(32);
  train::TrainConfig t;
  t.epochs = 3;
  t.warmup_epochs = 1;
  t.batch_size = 8;
  t.seed = 4;
  const auto dir = std::filesystem::temp_directory_path() / "hkt_train_det";
  std::filesystem::remove_all(dir);
  model::HktModel a(tiny(), 4), b(tiny(), 4);
  const auto ra = train::train(a, {&d.train, &d.val, &d.test}, t, dir / "a");
  const auto rb = train::train(b, {&d.train, &d.val, &d.test}, t, dir / "b");
  EXPECT_NEAR(ra.epochs[0].train_loss, rb.epochs[0].train_loss, 1e-12);
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(a.params(), b.params());
  EXPECT_EQ(ra.epochs.size(), 3u);
  EXPECT_TRUE(ra.simplex_ok());
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "best.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "summary.json"));
  // Best-val checkpoint is what the model holds at the end.
  EXPECT_EQ(model::HktModel::load(dir / "a" / "best.ckpt").params(), a.params());
  EXPECT_EQ(ra.content_hash, rb.content_hash);
  std::filesystem::remove_all(dir);
}

TEST(Train, LrFollowsSchedule) {
  auto d = tiny_data(16);
  train::TrainConfig t;
  t.epochs = 4;
  t.warmup_epochs = 1;
  t.batch_size = 8;
  t.peak_lr = 5e-3;
  model::HktModel m(tiny(), 2);
  const auto r = train::train(m, {&d.train, &d.val, nullptr}, t);
  // 2 steps per epoch; last step of epoch 1 is still warming up.
  const train::OneCycle s(5e-3, 8, 2);
  EXPECT_EQ(r.epochs[0].lr, s.lr(1));
  EXPECT_EQ(r.epochs[3].lr, s.lr(7));
  EXPECT_LE(r.epochs[3].lr, 5e-3 / 1e3);
}

TEST(Train, DivergenceNamesLrAndNorm) {
  auto d = tiny_data(16);
  train::TrainConfig t;
  t.epochs = 3;
  t.warmup_epochs = 1;
  t.batch_size = 8;
  t.peak_lr = 1e300;
  t.clip_norm = 1e300;
  model::HktModel m(tiny(), 2);
  try {
    train::train(m, {&d.train, &d.val, nullptr}, t);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("lr"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("grad norm"), std::string::npos);
  }
}

TEST(Train, OverfitsSmallSubset) {
  // 64 distinct expressions; a tiny model must memorise them.
  auto d = tiny_data(64);
  auto c = tiny();
  c.d_model = 32;
  c.n_heads = 2;
  c.n_layers = 2;
  train::TrainConfig t;
  t.epochs = 200;
  t.warmup_epochs = 10;
  t.batch_size = 16;
  t.peak_lr = 3e-3;
  t.weight_decay = 0.0;
  t.invariant_probes = 1;
  model::HktModel m(c, 1);
  const auto r = train::train(m, {&d.train, &d.train, nullptr}, t);
  double best = 0.0;
  for (const auto& e : r.epochs) best = std::max(best, e.train_acc);
  EXPECT_EQ(best, 1.0);
  EXPECT_EQ(r.best_val_acc, 1.0);
}

TEST(Sweep, GridAndAblationRows) {
  auto d = tiny_data(16);
  auto c = tiny();
  c.n_levels = 3;
  train::TrainConfig t;
  t.epochs = 2;
  t.warmup_epochs = 1;
  t.batch_size = 8;
  train::SweepSpec spec;
  spec.ablations = {"full", "no_hierarchy", "bogus"};
  spec.levels = {1, 2, 3};
  spec.strides = {2};
  const auto rows = train::ablation_sweep(c, t, {&d.train, &d.val, &d.test}, spec);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[1].model.n_levels, 1u);
  EXPECT_FALSE(rows[2].error.empty());
  EXPECT_EQ(rows[3].overhead, 1.0);
  EXPECT_EQ(rows[4].overhead, 1.25);
  EXPECT_EQ(rows[5].overhead, 1.3125);
  const auto grid = train::grid_table_csv(rows);
  EXPECT_NE(grid.find("3,2,1.3125,"), std::string::npos);
  EXPECT_NE(train::ablation_table_csv(rows).find("bogus"), std::string::npos);
  const auto again = train::ablation_sweep(c, t, {&d.train, &d.val, &d.test}, spec);
  EXPECT_EQ(train::grid_table_csv(again), grid);
}
