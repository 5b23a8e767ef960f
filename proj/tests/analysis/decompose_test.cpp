#include <gtest/gtest.h>

#include <cmath>

#include "hkt/analysis/decompose.hpp"
#include "hkt/analysis/report.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::analysis {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, num::Prng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

TEST(Split, DirectionalButPsdExample) {
  const auto s = split_bilinear(Tensor::from_rows({{2, 1}, {0, 2}}));
  EXPECT_EQ(s.ms, Tensor::from_rows({{2, 0.5}, {0.5, 2}}));
  EXPECT_EQ(s.ma, Tensor::from_rows({{0, 0.5}, {-0.5, 0}}));
  EXPECT_GT(eigen_summary(s.ms).min_eigenvalue, 0.0);
}

TEST(Split, BitwiseWhenMirroredEntriesAreComparable) {
  num::Prng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    // positive entries within a factor of two of each other
    Tensor m = Tensor::matrix(48, 48);
    for (double& v : m.storage()) v = rng.uniform(1.0, 2.0) * std::ldexp(1.0, trial - 10);
    const auto s = split_bilinear(m);
    for (std::size_t i = 0; i < 48; ++i)
      for (std::size_t j = 0; j < 48; ++j) {
        ASSERT_EQ(s.ms(i, j) + s.ma(i, j), m(i, j));
        ASSERT_EQ(s.ms(i, j), s.ms(j, i));
      }
  }
}

TEST(Split, GeneralMatricesWithinOneUlp) {
  num::Prng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor m = random_matrix(48, 48, rng);
    for (std::size_t i = 0; i < 40; ++i) m[rng.below(m.size())] *= 1e-7;  // mixed magnitudes
    const auto s = split_bilinear(m);
    for (std::size_t i = 0; i < 48; ++i)
      for (std::size_t j = 0; j < 48; ++j) {
        const double big = std::max(std::abs(m(i, j)), std::abs(m(j, i)));
        ASSERT_EQ(s.ms(i, j), s.ms(j, i));
        ASSERT_LE(std::abs(s.ms(i, j) + s.ma(i, j) - m(i, j)), big * 0x1p-52);
        ASSERT_LE(std::abs(s.ma(i, j) + s.ma(j, i)), big * 0x1p-51);
      }
  }
}

TEST(Decompose, IdentitiesHoldOnRandomProbes) {
  num::Prng rng(3);
  const std::size_t d = 12, dk = 4;
  const Tensor wq = random_matrix(dk, d, rng), wk = random_matrix(dk, d, rng);
  std::vector<Tensor> probes{random_matrix(9, d, rng), random_matrix(5, d, rng)};
  const auto r = decompose_head(wq, wk, dk, probes);
  EXPECT_GT(r.exact_entries, 0u);
  EXPECT_LT(r.max_split_error, 1e-15 * 16);
  EXPECT_LT(r.max_sym_dev, 1e-9);
  EXPECT_LT(r.max_anti_dev, 1e-9);
  EXPECT_GT(r.energy, 0.0);
  EXPECT_NEAR(r.energy_from_ma / r.energy, 1.0, 1e-9);
  EXPECT_GT(r.ratio, 0.0);
}

TEST(Decompose, PairIdentityAgainstDirectAlgebra) {
  num::Prng rng(8);
  const std::size_t d = 6, dk = 3;
  const Tensor wq = random_matrix(dk, d, rng), wk = random_matrix(dk, d, rng);
  const auto sp = split_bilinear(bilinear_form(wq, wk));
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor xy = random_matrix(2, d, rng);
    const Tensor s = scores_from_projections(xy, wq, wk, dk);
    double sym = 0.0, anti = 0.0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        sym += xy(0, a) * sp.ms(a, b) * xy(1, b);
        anti += xy(0, a) * sp.ma(a, b) * xy(1, b);
      }
    EXPECT_NEAR(s(0, 1) + s(1, 0), 2.0 * sym / std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(s(0, 1) - s(1, 0), 2.0 * anti / std::sqrt(3.0), 1e-12);
  }
}

TEST(Decompose, TiedProjectionsHaveNoDirectionalEnergy) {
  num::Prng rng(5);
  const Tensor w = random_matrix(4, 10, rng);
  const auto r = decompose_head(w, w, 4, {random_matrix(16, 10, rng)});
  EXPECT_EQ(r.max_ma_abs, 0.0);
  EXPECT_EQ(r.energy, 0.0);
  EXPECT_EQ(r.energy_from_ma, 0.0);
  EXPECT_TRUE(std::isinf(r.ratio));
  EXPECT_EQ(r.spectrum.negative, 0u);
}

TEST(Decompose, BasisProbesDetectAnyAntisymmetry) {
  num::Prng rng(6);
  const std::size_t d = 5;
  const Tensor wq = random_matrix(3, d, rng), wk = random_matrix(3, d, rng);
  const auto r = decompose_head(wq, wk, 3, {Tensor::identity(d)});
  EXPECT_GT(r.max_ma_abs, 1e-12);
  EXPECT_GT(r.energy, 0.0);
}

TEST(Psd, DiagonalExample) {
  const auto s = eigen_summary(Tensor::from_rows({{1, 0}, {0, -1}}));
  EXPECT_DOUBLE_EQ(s.fraction_negative, 0.5);
  EXPECT_DOUBLE_EQ(s.min_eigenvalue, -1.0);
}

TEST(Psd, RandomGaussianProjectionsAreIndefinite) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    num::Prng rng(seed);
    const Tensor wq = random_matrix(32, 32, rng), wk = random_matrix(32, 32, rng);
    const Tensor m = bilinear_form(wq, wk);
    Tensor sym = Tensor::matrix(32, 32);
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) sym(i, j) = (m(i, j) + m(j, i)) / (2.0 * std::sqrt(32.0));
    const auto s = eigen_summary(sym);
    EXPECT_GE(s.fraction_negative, 0.3) << seed;
    EXPECT_LE(s.fraction_negative, 0.7) << seed;
  }
}

model::ModelConfig tiny() {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_levels = 2;
  c.n_layers = 1;
  c.max_seq_len = 16;
  return c;
}

TEST(Psd, AuditCoversEveryHead) {
  model::HktModel m(tiny(), 4);
  const auto rows = psd_audit(m);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_NEAR(r.spectrum.fraction_negative, 0.5, 0.2);
}

TEST(Psd, TiedProjectionsArePsd) {
  model::HktModel m(tiny(), 4);
  for (std::size_t l = 0; l < 2; ++l)
    m.params().at(model::level_key(0, l, "wk")) = m.params().at(model::level_key(0, l, "wq"));
  for (const auto& r : psd_audit(m)) EXPECT_EQ(r.spectrum.fraction_negative, 0.0);
}

TEST(Decompose, ModelReportShape) {
  model::HktModel m(tiny(), 9);
  std::vector<std::vector<int>> probes{{1, 2, 3, 4, 5, 6, 7, 8}, {3, 3, 1, 0, 2, 2, 9, 9}};
  const auto rep = decompose_scores(m, probes);
  EXPECT_EQ(rep.rows.size(), 4u);
  ASSERT_EQ(rep.mean_ratio.size(), 1u);
  EXPECT_EQ(rep.mean_ratio[0].size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_LT(r.max_sym_dev, 1e-9);
    EXPECT_NEAR(r.energy_from_ma, r.energy, 1e-9 * r.energy);
  }
  const std::string csv = ratio_table_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "level,layer0");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const std::string jl = decomposition_jsonl(rep);
  EXPECT_EQ(std::count(jl.begin(), jl.end(), '\n'), 4);
  EXPECT_NE(jl.find("\"format\":\"hkt-analysis-v1\""), std::string::npos);
}

}  // namespace
}  // namespace hkt::analysis
