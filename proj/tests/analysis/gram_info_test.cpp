#include <gtest/gtest.h>

#include <cmath>

#include "hkt/analysis/gram.hpp"
#include "hkt/analysis/info.hpp"
#include "hkt/analysis/report.hpp"
#include "hkt/error.hpp"
#include "hkt/num/linalg.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::analysis {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, num::Prng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.storage()) v = scale * rng.normal();
  return t;
}

struct Levels {
  std::vector<Tensor> points, forms, wq, wk;
  std::vector<double> lambda;
};

Levels random_levels(std::size_t n, num::Prng& rng) {
  Levels lv;
  const std::size_t dims[] = {8, 6, 4}, dks[] = {3, 2, 2};
  for (int l = 0; l < 3; ++l) {
    lv.points.push_back(random_matrix(n, dims[l], rng, 0.5));
    lv.wq.push_back(random_matrix(dks[l], dims[l], rng, 0.4));
    lv.wk.push_back(random_matrix(dks[l], dims[l], rng, 0.4));
    Tensor f = Tensor::matrix(dims[l], dims[l]);
    for (std::size_t a = 0; a < dims[l]; ++a)
      for (std::size_t b = 0; b < dims[l]; ++b)
        for (std::size_t k = 0; k < dks[l]; ++k) f(a, b) += lv.wq[l](k, a) * lv.wk[l](k, b);
    lv.forms.push_back(f);
  }
  lv.lambda = {0.5, 0.3, 0.2};
  return lv;
}

TEST(Gram, PsdProjectedKernelIsPsd) {
  num::Prng rng(21);
  auto lv = random_levels(20, rng);
  const auto r = gram_from_levels(lv.points, lv.forms, lv.wq, lv.wk, lv.lambda);
  EXPECT_GE(r.min_eig, -1e-9 * r.frobenius);
  EXPECT_LE(r.linear_rank, r.rank_bound);
  EXPECT_EQ(r.rank_bound, 6u + 4u + 4u);
  for (std::size_t i = 0; i < 400; ++i) {
    double s = 0.0;
    for (int l = 0; l < 3; ++l) s += lv.lambda[l] * r.level_kernels[l][i];
    EXPECT_NEAR(r.k_hier[i], s, 1e-12 * std::abs(s));
  }
}

TEST(Gram, SingleSample) {
  num::Prng rng(2);
  auto lv = random_levels(1, rng);
  const auto r = gram_from_levels(lv.points, lv.forms, lv.wq, lv.wk, lv.lambda);
  ASSERT_EQ(r.k_hier.size(), 1u);
  EXPECT_GT(r.k_hier[0], 0.0);
}

TEST(Gram, DuplicatedSampleGivesZeroEigenvalue) {
  num::Prng rng(4);
  auto lv = random_levels(6, rng);
  for (auto& p : lv.points)
    for (std::size_t c = 0; c < p.cols(); ++c) p(5, c) = p(2, c);
  const auto r = gram_from_levels(lv.points, lv.forms, lv.wq, lv.wk, lv.lambda);
  for (std::size_t j = 0; j < 6; ++j)
    EXPECT_NEAR(r.k_hier(5, j), r.k_hier(2, j), 1e-12 * r.frobenius);
  EXPECT_LE(std::abs(r.min_eig), 1e-9 * r.frobenius);
}

TEST(Gram, LargeInputsAreRescaled) {
  num::Prng rng(4);
  auto lv = random_levels(5, rng);
  for (auto& p : lv.points)
    for (double& v : p.storage()) v *= 100.0;
  const auto r = gram_from_levels(lv.points, lv.forms, lv.wq, lv.wk, lv.lambda);
  EXPECT_LT(r.input_scale, 1.0);
  for (double v : r.k_hier.storage()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Gram, ModelPathAndReport) {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_levels = 2;
  c.n_layers = 1;
  c.max_seq_len = 16;
  model::HktModel m(c, 1);
  num::Prng rng(3);
  std::vector<std::vector<int>> samples;
  for (int i = 0; i < 20; ++i) {
    std::vector<int> s(12);
    for (int& t : s) t = int(rng.below(17));
    samples.push_back(s);
  }
  const auto r = gram_factorisation(m, samples, 0, 1);
  EXPECT_EQ(r.n, 20u);
  EXPECT_GE(r.min_eig, -1e-9 * r.frobenius);
  EXPECT_LE(r.linear_rank, r.rank_bound);
  EXPECT_NEAR(r.lambda[0] + r.lambda[1], 1.0, 1e-15);
  EXPECT_NE(gram_jsonl(r).find("\"kind\":\"gram\""), std::string::npos);
}

TEST(Separation, FusedScoresLeaveTheFlatFamily) {
  model::ModelConfig c;
  c.d_model = 8;
  c.n_heads = 1;
  c.n_levels = 2;
  c.n_layers = 1;
  c.max_seq_len = 32;
  const std::vector<double> lambda{0.5, 0.5};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r = scale_separation(c, seed, lambda);
    EXPECT_GT(r.residual_hier, 1e-6);
    EXPECT_LT(r.residual_flat, 1e-9);
  }
}

// (features, target) jointly Gaussian with population R^2 = r2.
void gaussian_sample(std::size_t n, std::size_t q, double r2, std::uint64_t seed, Tensor& x,
                     std::vector<double>& y) {
  num::Prng rng(seed);
  x = random_matrix(n, q, rng);
  y.resize(n);
  const double noise = std::sqrt((1.0 - r2) / std::max(r2, 1e-300));
  for (std::size_t i = 0; i < n; ++i)
    y[i] = r2 > 0.0 ? x(i, 0) + noise * rng.normal() : rng.normal();
}

TEST(Info, GaussianHalfCorrelation) {
  Tensor x;
  std::vector<double> y;
  gaussian_sample(5000, 4, 0.5, 77, x, y);
  const auto li = level_info(x, y, 4);
  EXPECT_NEAR(li.rho2, 0.5, 0.05);
  EXPECT_GE(li.gaussian_bound, 0.30);
  EXPECT_LE(li.gaussian_bound, 0.40);
  EXPECT_GE(li.kappa, 0.9);
  EXPECT_LE(li.kappa, 1.1);
}

TEST(Info, IndependentTargetHasNoInformation) {
  Tensor x;
  std::vector<double> y;
  gaussian_sample(5000, 4, 0.0, 78, x, y);
  const auto li = level_info(x, y, 4);
  EXPECT_LE(li.gaussian_bound, 0.05);
  EXPECT_LE(li.nongaussian_bound, 0.05);
}

TEST(Info, HeavyTailCorrectionDominates) {
  const double rho2 = 0.5, kappa = 33.17;
  EXPECT_NEAR(nongaussian_bound(rho2, kappa) - gaussian_bound(rho2), 8.0, 0.05);
  EXPECT_NEAR(gaussian_bound(rho2), 0.35, 0.01);
}

TEST(Info, KappaCalibratedOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    num::Prng rng(seed);
    const auto st = num::mardia_kurtosis(random_matrix(2000, 5, rng));
    EXPECT_GE(st.kappa, 0.85);
    EXPECT_LE(st.kappa, 1.15);
  }
}

TEST(Info, LevelWeightsOnSimplex) {
  InfoReport rep;
  rep.sigma_f2 = 2.0;
  rep.eps0 = 0.5;
  rep.levels.resize(3);
  rep.levels[0].rho2 = 0.2;
  rep.levels[0].kappa = 1.0;
  rep.levels[1].rho2 = 0.4;
  rep.levels[1].kappa = 1.1;
  rep.levels[2].rho2 = 0.41;
  rep.levels[2].kappa = 3.0;
  const std::size_t lengths[] = {16, 8, 4};
  level_weights(rep, lengths);
  EXPECT_FALSE(rep.lambda_star_fallback);
  double total = 0.0;
  for (const auto& l : rep.levels) {
    EXPECT_GE(l.lambda_star, 0.0);
    total += l.lambda_star;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(rep.levels[2].lambda_star, 0.0);
  EXPECT_NEAR(rep.levels[0].delta_ng, 2.0 * 0.2 / 1.0, 1e-12);
  for (auto& l : rep.levels) l.kappa = 50.0;
  level_weights(rep, lengths);
  EXPECT_TRUE(rep.lambda_star_fallback);
  EXPECT_NEAR(rep.levels[1].lambda_star, 1.0 / 3.0, 1e-15);
}

TEST(Info, ModelPath) {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_levels = 2;
  c.n_layers = 1;
  c.max_seq_len = 16;
  model::HktModel m(c, 5);
  num::Prng rng(9);
  data::Dataset d;
  for (int i = 0; i < 60; ++i) {
    std::vector<int> s(16);
    for (int& t : s) t = int(rng.below(17));
    d.sequences.push_back(s);
    d.labels.push_back(int(rng.below(10)));
  }
  InfoOptions opts;
  opts.pca_dims = 4;
  const auto rep = info_bounds(m, d, opts);
  ASSERT_EQ(rep.levels.size(), 2u);
  for (const auto& l : rep.levels) {
    EXPECT_GE(l.rho2, 0.0);
    EXPECT_LT(l.rho2, 1.0);
    EXPECT_GE(l.gaussian_bound, 0.0);
    EXPECT_GT(l.kappa, 0.0);
  }
  const std::string csv = info_csv(rep);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Decay, ExactGeometric) {
  std::map<std::size_t, double> acc;
  for (std::size_t L = 1; L <= 5; ++L)
    acc[L] = 100.0 * (1.0 - 0.6 * std::pow(0.65, double(L - 1)));
  const auto fit = decay_calibration(acc);
  EXPECT_NEAR(fit.delta, 0.35, 1e-6);
  EXPECT_TRUE(fit.monotone);
  EXPECT_LT(fit.rss, 1e-20);
}

TEST(Decay, ConstantAccuracy) {
  const auto fit = decay_calibration({{1, 60.0}, {2, 60.0}, {3, 60.0}});
  EXPECT_EQ(fit.delta, 0.0);
  EXPECT_TRUE(fit.degenerate);
}

TEST(Decay, NonMonotoneIsFlaggedNotThrown) {
  const auto fit = decay_calibration({{1, 49.9}, {2, 55.7}, {3, 55.3}, {4, 57.7}});
  EXPECT_FALSE(fit.monotone);
  EXPECT_TRUE(std::isfinite(fit.delta));
  EXPECT_EQ(fit.residuals.size(), 4u);
  EXPECT_THROW(decay_calibration({{1, 50.0}, {2, 55.0}}), InputError);
  EXPECT_THROW(decay_calibration({{1, 50.0}, {2, 55.0}, {4, 56.0}}), InputError);
}

}  // namespace
}  // namespace hkt::analysis
