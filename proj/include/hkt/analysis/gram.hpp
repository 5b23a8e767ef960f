#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hkt/grad/tensor.hpp"
#include "hkt/model/hkt.hpp"

namespace hkt::analysis {

using grad::Tensor;

struct GramReport {
  std::size_t layer = 0, head = 0, n = 0;
  std::vector<double> lambda;
  std::vector<Tensor> level_kernels;  // K^(l), n x n
  Tensor k_hier;                      // sum_l lambda_l K^(l)
  std::vector<double> level_min_eig;
  double min_eig = 0.0;
  double frobenius = 0.0;
  double input_scale = 1.0;  // applied to every x when exp would overflow
  // First-order truncation: Phi^(l) = [W_Q x; W_K x].
  std::size_t linear_rank = 0;
  std::size_t rank_bound = 0;  // sum_l min(n, 2 d_k^(l))
};

// K_ij = exp(x_i^T M x_j) for rows x_i of `points`.
Tensor exp_kernel(const Tensor& points, const Tensor& m);

// Inputs: per level the n x d_l matrix of sample representations, and per
// level the bilinear form and the stacked head projections. M is projected
// onto the PSD cone before the kernel is built.
GramReport gram_from_levels(const std::vector<Tensor>& points, const std::vector<Tensor>& forms,
                            const std::vector<Tensor>& wq, const std::vector<Tensor>& wk,
                            std::span<const double> lambda);

// One head of one layer over a batch; each sample is represented by its
// time-averaged level rows.
GramReport gram_factorisation(const model::HktModel& m, const std::vector<std::vector<int>>& samples,
                              std::size_t layer = 0, std::size_t head = 0);

// ||S - P S P||_F / ||S||_F with P the projector onto the column space of
// x0: the relative distance from S to every x0 M x0^T.
double bilinear_residual(const Tensor& s, const Tensor& x0);

struct SeparationResult {
  double residual_hier = 0.0;  // fused scores with the given lambda
  double residual_flat = 0.0;  // level-0 scores alone (should be ~0)
};
// Fresh model and random embedded input from `config` and `seed`; first
// layer, head 0. Needs max_seq_len > d_model.
SeparationResult scale_separation(const model::ModelConfig& config, std::uint64_t seed,
                                  std::span<const double> lambda);

}  // namespace hkt::analysis
