#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hkt/grad/tensor.hpp"

namespace hkt::num {

using grad::Tensor;

// Eigenvalues ascending; column i of `eigenvectors` pairs with eigenvalue i.
struct EigenResult {
  std::vector<double> eigenvalues;
  Tensor eigenvectors;
  int sweeps = 0;
};

struct EighOptions {
  double tolerance = 1e-12;  // off-diagonal Frobenius norm relative to ||A||_F
  int max_sweeps = 100;
};

// Cyclic Jacobi on (A + A^T) / 2.
EigenResult eigh_symmetric(const Tensor& a, const EighOptions& options = {});

// Lower-triangular L with A = L L^T, or nullopt when a pivot falls below
// `relative_pivot` times the largest diagonal entry.
std::optional<Tensor> try_cholesky(const Tensor& a, double relative_pivot = 1e-12);
Tensor cholesky(const Tensor& a);
// Solves L L^T x = b.
std::vector<double> cholesky_solve(const Tensor& lower, std::span<const double> b);

std::vector<double> column_means(const Tensor& data);
// Sample covariance with divisor n - ddof.
Tensor covariance(const Tensor& data, std::size_t ddof = 1);

struct PcaProjection {
  std::vector<double> mean;
  Tensor components;  // p x dim, rows orthonormal
  std::vector<double> explained_variance;  // non-increasing

  std::size_t dims() const { return explained_variance.size(); }
  Tensor project(const Tensor& data) const;
};

PcaProjection fit_pca(const Tensor& data, std::size_t p);

double default_ridge_penalty(const Tensor& features);
// In-sample squared multiple correlation of a ridge fit with intercept,
// clamped to [0, 1 - 1e-12].
double ridge_r2(const Tensor& features, std::span<const double> target,
                std::optional<double> penalty = std::nullopt);

// n x n matrix of (x_i - mean)^T S^-1 (x_j - mean), S the 1/n covariance.
Tensor mahalanobis_sq(const Tensor& data);

struct MardiaStats {
  std::size_t n = 0;
  std::size_t p = 0;
  double classical = 0.0;  // n^-1 sum_i g_ii^2
  double pairwise = 0.0;      // n^-1 sum_ij g_ij^2
  double kappa = 0.0;      // classical / (p (p + 2))
  double kappa_pairwise = 0.0;
  bool ridged = false;  // covariance needed the 1e-10 trace/p ridge
};

// Streams over rows; never materialises the n x n matrix.
MardiaStats mardia_kurtosis(const Tensor& data);
double mardia_classical(const Tensor& data);
double mardia_pairwise(const Tensor& data);

double operator_norm(const Tensor& a);
// Nearest PSD matrix in Frobenius norm: clip negative eigenvalues at zero.
Tensor psd_project(const Tensor& symmetric);
std::size_t numeric_rank(std::span<const double> eigenvalues, double relative = 1e-8);

}  // namespace hkt::num
