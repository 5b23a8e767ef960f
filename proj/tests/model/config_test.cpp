#include "hkt/model/config.hpp"

#include <gtest/gtest.h>

#include "hkt/error.hpp"

namespace hkt::model {
namespace {

TEST(ModelConfig, DerivedLevelSizes) {
  ModelConfig c;
  c.d_model = 128;
  c.n_heads = 4;
  c.n_levels = 4;
  c.max_seq_len = 100;
  c.validate();
  EXPECT_EQ(c.head_dim(), 32u);
  EXPECT_EQ(c.level_len(0), 100u);
  EXPECT_EQ(c.level_len(1), 50u);
  EXPECT_EQ(c.level_len(2), 25u);
  EXPECT_EQ(c.level_len(3), 12u);
  EXPECT_EQ(c.level_dim(0), 128u);
  EXPECT_EQ(c.level_dim(1), 64u);
  EXPECT_EQ(c.level_dim(2), 32u);
  EXPECT_EQ(c.level_dim(3), 32u);
  EXPECT_EQ(c.level_head_dim(0), 32u);
  EXPECT_EQ(c.level_head_dim(1), 16u);
  EXPECT_EQ(c.level_head_dim(2), 16u);
}

TEST(ModelConfig, SmallWidthsNeverGrow) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  EXPECT_EQ(c.level_dim(0), 16u);
  EXPECT_EQ(c.level_dim(2), 16u);
  EXPECT_EQ(c.level_head_dim(0), 8u);
  EXPECT_EQ(c.level_head_dim(1), 8u);
}

TEST(ModelConfig, ValidationErrors) {
  ModelConfig c;
  c.n_heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.stride = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.n_levels = 3;
  c.stride = 2;
  c.max_seq_len = 4;  // needs s^(L-1) + 1 = 5
  EXPECT_THROW(c.validate(), ConfigError);
  c.max_seq_len = 5;
  EXPECT_NO_THROW(c.validate());
  c.n_levels = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, CanonicalRoundTrip) {
  ModelConfig c;
  c.causal = true;
  c.dropout = 0.1;
  c.beta_mode = BetaMode::fixed0;
  c.alpha_mode = AlphaMode::uniform;
  const std::string text = c.canonical();
  EXPECT_EQ(ModelConfig::parse_canonical(text), c);
  EXPECT_EQ(text.substr(0, 17), "alpha_mode=unifor");
  EXPECT_THROW(ModelConfig::parse_canonical("bogus=1\n"), ConfigError);
  EXPECT_THROW(ModelConfig::parse_canonical("d_model=x\n"), ConfigError);
}

}  // namespace
}  // namespace hkt::model
