#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hkt/grad/graph.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::grad {

// Boolean mask over a score matrix; `blocked(i, j)` entries are excluded
// from the softmax and come out as exact zeros.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), blocked_(rows * cols, 0) {}

  // Blocks the strict upper triangle (j > i).
  static Mask causal(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool blocked(std::size_t i, std::size_t j) const { return blocked_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool blocked) { blocked_[i * cols_ + j] = blocked; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<unsigned char> blocked_;
};

inline constexpr double kLayerNormEps = 1e-12;

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
// a * s where s holds one value.
Var scale_by(const Var& a, const Var& s);
// Row i of a scaled by w(i, 0); w is [rows x 1].
Var scale_rows(const Var& a, const Var& w);
// x [m x n] + b broadcast over rows; b has n values.
Var add_row_bias(const Var& x, const Var& b);
Var sum(const Var& a);

// Nonlinearities.
Var gelu(const Var& x);  // exact erf form
Var sigmoid(const Var& x);
Var softmax_rows(const Var& s, const Mask* mask = nullptr);
Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps = kLayerNormEps);
// Inverted dropout: kept entries are scaled by 1/(1-p).
Var dropout(const Var& x, double p, num::Prng& rng);

// Sequence primitives. x is [time x channels].
// out[m][c] = bias[c] + sum_j w[c][j] * x[m*stride - (k-1) + j][c]. At
// negative time x is zero (zeros) or repeats row 0 (edge); both keep the
// output causal. out_len 0 means every m with m*stride <= T-1.
enum class ConvPad { zeros, edge };
Var conv1d_causal_depthwise(const Var& x, const Var& w, const Var* bias, std::size_t stride,
                            std::size_t out_len = 0, ConvPad pad = ConvPad::zeros);
Var embedding_lookup(const Var& table, std::span<const int> ids);
Var mean_over_time(const Var& x);  // [1 x channels]
Var prefix_mean(const Var& x);     // row t = mean of rows 0..t
Var cross_entropy_logits(const Var& logits, std::span<const int> labels);

// Index plumbing.
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
// out[i][j] = s[min(i/f, r-1)][min(j/f, c-1)], out is [out_rows x out_cols].
Var block_upsample(const Var& s, std::size_t out_rows, std::size_t out_cols, std::size_t factor);
// out[i][q] = sum of p[i][j] over j with min(j/f, out_cols-1) == q.
Var block_sum_cols(const Var& p, std::size_t out_cols, std::size_t factor);
Var slice_cols(const Var& x, std::size_t start, std::size_t len);
Var slice_rows(const Var& x, std::size_t start, std::size_t len);
Var concat_cols(const std::vector<Var>& parts);
Var element(const Var& x, std::size_t index);

// Shared helpers for detached code paths.
double gelu_value(double x);
double gelu_derivative(double x);
// Nearest-block index with clamping for a tail that does not fill a block.
inline std::size_t block_index(std::size_t i, std::size_t factor, std::size_t n) {
  std::size_t b = i / factor;
  return b < n ? b : n - 1;
}

}  // namespace hkt::grad
