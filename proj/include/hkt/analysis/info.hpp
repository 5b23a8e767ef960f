#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "hkt/data/dataset.hpp"
#include "hkt/grad/tensor.hpp"
#include "hkt/model/hkt.hpp"

namespace hkt::analysis {

using grad::Tensor;

struct LevelInfo {
  std::size_t level = 0;
  std::size_t n = 0, p = 0;
  double rho2 = 0.0;
  double kappa = 0.0;        // classical Mardia / (p (p + 2)) on [PCA(S), f]
  double kappa_pairwise = 0.0;  // pairwise-sum variant
  double mardia_classical = 0.0;
  double mardia_pairwise = 0.0;
  double gaussian_bound = 0.0;     // -1/2 log(1 - rho2)
  double nongaussian_bound = 0.0;  // gaussian_bound + (kappa - 1) rho2 / 2
  double delta_ng = 0.0;
  double lambda_star = 0.0;
};

struct InfoReport {
  std::size_t layer = 0;
  std::size_t block = 0;  // q
  double sigma_f2 = 0.0;
  double eps0 = 0.0;
  bool lambda_star_fallback = false;  // no level had a positive net gain
  std::vector<LevelInfo> levels;
};

double gaussian_bound(double rho2);
// gaussian_bound + (kappa - 1) rho2 / 2
double nongaussian_bound(double rho2, double kappa);

// Features (n x q) against a scalar target: PCA to p dims, ridge rho^2,
// Mardia kappa on the joint (p + 1)-dim sample, both bounds.
LevelInfo level_info(const Tensor& features, std::span<const double> target, std::size_t p,
                     std::optional<double> penalty = std::nullopt);

// Fills delta_ng and lambda_star given rho2/kappa per level.
// lambda_l ∝ max(0, sigma_f2 (rho2_l - rho2_{l-1}) - (kappa_l - 1) rho2_l) / T_l^2.
void level_weights(InfoReport& report, std::span<const std::size_t> level_lengths);

struct InfoOptions {
  std::size_t layer = 0;
  std::size_t block = 8;  // upper-left q x q of S^(l), every head
  std::size_t pca_dims = 10;
  std::optional<double> penalty;
  double eps0 = 0.5;  // error of the flat model
};

// f(X) is the logit of the true class.
InfoReport info_bounds(const model::HktModel& m, const data::Dataset& d, const InfoOptions& opts);

struct DecayFit {
  double delta = 0.0;
  double eps_inf = 0.0;    // asymptotic error
  double amplitude = 0.0;  // eps_0 - eps_inf
  double rss = 0.0;        // residual sum of squares in error units
  std::vector<double> residuals;
  bool monotone = true;
  bool degenerate = false;  // flat curve: delta set to 0
};

// Errors e_l = 1 - acc_l / 100 for consecutive L = 1, 2, ... fitted as
// e_l = eps_inf + amplitude (1 - delta)^(l).
DecayFit decay_calibration(const std::map<std::size_t, double>& accuracy_by_levels);

}  // namespace hkt::analysis
