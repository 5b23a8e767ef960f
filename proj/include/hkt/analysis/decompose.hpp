#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hkt/grad/tensor.hpp"
#include "hkt/model/hkt.hpp"

namespace hkt::analysis {

using grad::Tensor;

// M = Ms + Ma with Ms exactly symmetric and Ma antisymmetric to within one
// ulp of the larger mirrored entry. Ms(i,j) is rounded onto the coarser ulp
// grid of M(i,j), M(j,i), so Ms + Ma == M holds bit for bit whenever
// M(i,j) - Ms(i,j) stays in M(i,j)'s binade or below (same-sign entries
// within a factor of three). Elsewhere no pair of doubles in the binade of
// (M(i,j) -/+ M(j,i)) / 2 can sum to M(i,j) exactly; the error is < 1 ulp.
struct BilinearSplit {
  Tensor m, ms, ma;
};
BilinearSplit split_bilinear(const Tensor& m);

// Rows [head * dk, (head + 1) * dk) of a stacked projection.
Tensor head_rows(const Tensor& stacked, std::size_t head, std::size_t dk);
// W_Q^T W_K by plain loops (exactly symmetric when wq == wk).
Tensor bilinear_form(const Tensor& wq, const Tensor& wk);

// x M y^T / sqrt(dk) entry by entry; rows of x are positions.
Tensor scores_from_form(const Tensor& x, const Tensor& m, double dk);
// (x W_Q^T)(x W_K^T)^T / sqrt(dk) with a fixed summation order.
Tensor scores_from_projections(const Tensor& x, const Tensor& wq, const Tensor& wk, double dk);

struct EigenSummary {
  std::vector<double> eigenvalues;  // ascending
  std::size_t negative = 0;         // below -tol * max|eig|
  std::size_t positive = 0;
  double fraction_negative = 0.0;   // negative / (negative + positive)
  double min_eigenvalue = 0.0;
};
// Eigenvalues within 1e-10 * max|eig| of zero count as zero: W_Q^T W_K has
// rank <= d_k, and the null space would otherwise add round-off signs.
EigenSummary eigen_summary(const Tensor& symmetric, double zero_tol = 1e-10);

struct LevelDecomposition {
  std::size_t layer = 0, level = 0, head = 0;
  std::size_t dk = 0;
  double frob_ms = 0.0, frob_ma = 0.0, ratio = 0.0;  // ratio is +inf when Ma = 0
  EigenSummary spectrum;                             // of Ms / sqrt(dk)
  double energy = 0.0;          // sum_{i != j} (S_ij - S_ji)^2 over probes
  double energy_from_ma = 0.0;  // same via 2 x_i^T Ma x_j / sqrt(dk)
  double max_sym_dev = 0.0;     // max |S_ij + S_ji - 2 x_i^T Ms x_j / sqrt(dk)| / scale
  double max_anti_dev = 0.0;
  double max_ma_abs = 0.0;
  bool exact_split = true;  // Ms + Ma == M bitwise on every entry
  std::size_t exact_entries = 0, entries = 0;
  double max_split_error = 0.0;  // max |Ms + Ma - M|
};

// One head. probes: T_i x d matrices whose rows are level representations.
LevelDecomposition decompose_head(const Tensor& wq, const Tensor& wk, std::size_t dk,
                                  const std::vector<Tensor>& probes);

struct DecompositionReport {
  std::vector<LevelDecomposition> rows;  // layer-major, then level, then head
  // mean ratio per (layer, level), finite ratios only
  std::vector<std::vector<double>> mean_ratio;
};

DecompositionReport decompose_scores(const model::HktModel& m,
                                     const std::vector<std::vector<int>>& probe_batch);

struct PsdRow {
  std::size_t layer = 0, level = 0, head = 0;
  EigenSummary spectrum;
};
// Eigenvalues of (M + M^T) / (2 sqrt(dk)) for every head of every level.
std::vector<PsdRow> psd_audit(const model::HktModel& m);

// Level representations of every probe, [sample][layer][level].
std::vector<std::vector<std::vector<Tensor>>> collect_levels(
    const model::HktModel& m, const std::vector<std::vector<int>>& batch);

}  // namespace hkt::analysis
