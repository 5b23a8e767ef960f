#include "hkt/num/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hkt/error.hpp"

namespace hkt::num {

namespace {

void require_matrix(const Tensor& a, const char* what) {
  if (a.rank() != 2)
    throw DimensionError(std::string(what) + ": expected a matrix, got " +
                         grad::shape_str(a.shape()));
}

void require_square(const Tensor& a, const char* what) {
  require_matrix(a, what);
  if (a.rows() != a.cols())
    throw DimensionError(std::string(what) + ": matrix is not square " +
                         grad::shape_str(a.shape()));
}

double off_diagonal_norm(const Tensor& a) {
  const std::size_t n = a.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

Tensor centered(const Tensor& data, const std::vector<double>& mean) {
  Tensor z = data;
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) -= mean[j];
  return z;
}

// Forward substitution L y = b, in place.
void forward_solve(const Tensor& lower, double* b) {
  const std::size_t n = lower.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * b[k];
    b[i] = s / lower(i, i);
  }
}

void backward_solve_t(const Tensor& lower, double* b) {
  const std::size_t n = lower.rows();
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= lower(k, i) * b[k];
    b[i] = s / lower(i, i);
  }
}

struct Whitened {
  Tensor w;  // n x p, row i = L^-1 (x_i - mean)
  bool ridged = false;
};

Whitened whiten(const Tensor& data) {
  require_matrix(data, "mahalanobis");
  const std::size_t n = data.rows(), p = data.cols();
  if (n <= p)
    throw InputError("mahalanobis: need more samples than dimensions (n=" +
                     std::to_string(n) + ", p=" + std::to_string(p) + ")");
  Tensor z = centered(data, column_means(data));
  Tensor cov = grad::matmul_tn(z, z);
  for (double& v : cov.storage()) v /= static_cast<double>(n);

  Whitened out;
  auto l = try_cholesky(cov);
  if (!l) {
    double trace = 0.0;
    for (std::size_t i = 0; i < p; ++i) trace += cov(i, i);
    const double ridge = 1e-10 * trace / static_cast<double>(p);
    for (std::size_t i = 0; i < p; ++i) cov(i, i) += ridge;
    l = try_cholesky(cov);
    out.ridged = true;
    if (!l || trace <= 0.0)
      throw SingularityError("mahalanobis: covariance is rank deficient after ridge");
  }
  for (std::size_t i = 0; i < n; ++i) forward_solve(*l, &z(i, 0));
  out.w = std::move(z);
  return out;
}

}  // namespace

EigenResult eigh_symmetric(const Tensor& input, const EighOptions& options) {
  require_square(input, "eigh_symmetric");
  const std::size_t n = input.rows();
  Tensor a = input;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = m;
      a(j, i) = m;
    }
  Tensor v = Tensor::identity(n);

  const double scale = grad::frobenius_norm(a);
  const double target = options.tolerance * scale;
  int sweep = 0;
  double off = off_diagonal_norm(a);
  while (off > target && scale > 0.0) {
    if (sweep == options.max_sweeps)
      throw ConvergenceError("eigh_symmetric: no convergence after " +
                                 std::to_string(sweep) + " sweeps",
                             off / scale);
    ++sweep;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    off = off_diagonal_norm(a);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  EigenResult out;
  out.sweeps = sweep;
  out.eigenvalues.resize(n);
  out.eigenvectors = Tensor::matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.eigenvalues[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v(r, order[c]);
  }
  return out;
}

std::optional<Tensor> try_cholesky(const Tensor& a, double relative_pivot) {
  require_square(a, "cholesky");
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double floor = relative_pivot * max_diag;
  Tensor l = Tensor::matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > floor) || d <= 0.0) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Tensor cholesky(const Tensor& a) {
  auto l = try_cholesky(a);
  if (!l) throw SingularityError("cholesky: matrix is not positive definite");
  return *std::move(l);
}

std::vector<double> cholesky_solve(const Tensor& lower, std::span<const double> b) {
  require_square(lower, "cholesky_solve");
  if (b.size() != lower.rows())
    throw DimensionError("cholesky_solve: rhs length " + std::to_string(b.size()) +
                         " vs " + std::to_string(lower.rows()));
  std::vector<double> x(b.begin(), b.end());
  forward_solve(lower, x.data());
  backward_solve_t(lower, x.data());
  return x;
}

std::vector<double> column_means(const Tensor& data) {
  require_matrix(data, "column_means");
  std::vector<double> mean(data.cols(), 0.0);
  if (data.rows() == 0) return mean;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j) mean[j] += data(i, j);
  for (double& m : mean) m /= static_cast<double>(data.rows());
  return mean;
}

Tensor covariance(const Tensor& data, std::size_t ddof) {
  require_matrix(data, "covariance");
  if (data.rows() <= ddof)
    throw InputError("covariance: need more than " + std::to_string(ddof) + " rows");
  Tensor z = centered(data, column_means(data));
  Tensor cov = grad::matmul_tn(z, z);
  const double denom = static_cast<double>(data.rows() - ddof);
  for (double& v : cov.storage()) v /= denom;
  return cov;
}

Tensor PcaProjection::project(const Tensor& data) const {
  if (data.rank() != 2 || data.cols() != mean.size())
    throw DimensionError("pca project: expected " + std::to_string(mean.size()) +
                         " columns, got " + grad::shape_str(data.shape()));
  return grad::matmul_nt(centered(data, mean), components);
}

PcaProjection fit_pca(const Tensor& data, std::size_t p) {
  require_matrix(data, "fit_pca");
  const std::size_t dim = data.cols();
  if (p == 0 || p > dim)
    throw ConfigError("fit_pca: p=" + std::to_string(p) + " outside [1, " +
                      std::to_string(dim) + "]");
  const Tensor cov = covariance(data, 1);
  const EigenResult eig = eigh_symmetric(cov);

  PcaProjection out;
  out.mean = column_means(data);
  out.components = Tensor::matrix(p, dim);
  out.explained_variance.resize(p);
  for (std::size_t r = 0; r < p; ++r) {
    const std::size_t c = dim - 1 - r;
    out.explained_variance[r] = eig.eigenvalues[c];
    // fix the sign: largest-magnitude entry positive
    std::size_t arg = 0;
    for (std::size_t k = 1; k < dim; ++k)
      if (std::abs(eig.eigenvectors(k, c)) > std::abs(eig.eigenvectors(arg, c))) arg = k;
    const double sign = eig.eigenvectors(arg, c) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < dim; ++k) out.components(r, k) = sign * eig.eigenvectors(k, c);
  }
  return out;
}

double default_ridge_penalty(const Tensor& features) {
  require_matrix(features, "ridge");
  Tensor z = centered(features, column_means(features));
  double trace = 0.0;
  for (double v : z.storage()) trace += v * v;
  return 1e-3 * trace / static_cast<double>(features.cols());
}

double ridge_r2(const Tensor& features, std::span<const double> target,
                std::optional<double> penalty) {
  require_matrix(features, "ridge_r2");
  const std::size_t n = features.rows(), q = features.cols();
  if (target.size() != n)
    throw DimensionError("ridge_r2: " + std::to_string(n) + " rows but " +
                         std::to_string(target.size()) + " targets");
  if (n <= q)
    throw InputError("ridge_r2: need n > q (n=" + std::to_string(n) + ", q=" +
                     std::to_string(q) + ")");
  const double lambda = penalty ? *penalty : default_ridge_penalty(features);
  if (!(lambda > 0.0)) throw ConfigError("ridge_r2: penalty must be positive");

  const double ybar = std::accumulate(target.begin(), target.end(), 0.0) / n;
  std::vector<double> y(n);
  double sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = target[i] - ybar;
    sst += y[i] * y[i];
  }
  if (!(sst > 0.0)) throw DegenerateError("ridge_r2: target has zero variance");

  const Tensor z = centered(features, column_means(features));
  Tensor gram = grad::matmul_tn(z, z);
  for (std::size_t i = 0; i < q; ++i) gram(i, i) += lambda;
  std::vector<double> xty(q, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) xty[j] += z(i, j) * y[i];
  const std::vector<double> beta = cholesky_solve(cholesky(gram), xty);

  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t j = 0; j < q; ++j) pred += z(i, j) * beta[j];
    const double r = y[i] - pred;
    sse += r * r;
  }
  return std::clamp(1.0 - sse / sst, 0.0, 1.0 - 1e-12);
}

Tensor mahalanobis_sq(const Tensor& data) {
  const Whitened wh = whiten(data);
  return grad::matmul_nt(wh.w, wh.w);
}

MardiaStats mardia_kurtosis(const Tensor& data) {
  const Whitened wh = whiten(data);
  const std::size_t n = data.rows(), p = data.cols();
  MardiaStats out;
  out.n = n;
  out.p = p;
  out.ridged = wh.ridged;
  double diag4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double g = 0.0;
    for (std::size_t k = 0; k < p; ++k) g += wh.w(i, k) * wh.w(i, k);
    diag4 += g * g;
  }
  // sum_ij g_ij^2 = ||W^T W||_F^2 with W^T W only p x p
  const Tensor small = grad::matmul_tn(wh.w, wh.w);
  double pair = 0.0;
  for (double v : small.storage()) pair += v * v;

  const double nn = static_cast<double>(n);
  const double norm = static_cast<double>(p * (p + 2));
  out.classical = diag4 / nn;
  out.pairwise = pair / nn;
  out.kappa = out.classical / norm;
  out.kappa_pairwise = out.pairwise / norm;
  return out;
}

double mardia_classical(const Tensor& data) { return mardia_kurtosis(data).classical; }
double mardia_pairwise(const Tensor& data) { return mardia_kurtosis(data).pairwise; }

double operator_norm(const Tensor& a) {
  require_matrix(a, "operator_norm");
  const Tensor g = a.rows() < a.cols() ? grad::matmul_nt(a, a) : grad::matmul_tn(a, a);
  if (g.size() == 0) return 0.0;
  const EigenResult eig = eigh_symmetric(g);
  return std::sqrt(std::max(0.0, eig.eigenvalues.back()));
}

Tensor psd_project(const Tensor& symmetric) {
  const EigenResult eig = eigh_symmetric(symmetric);
  const std::size_t n = symmetric.rows();
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = eig.eigenvalues[k];
    if (lam <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = lam * eig.eigenvectors(i, k);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += vi * eig.eigenvectors(j, k);
    }
  }
  return out;
}

std::size_t numeric_rank(std::span<const double> eigenvalues, double relative) {
  double top = 0.0;
  for (double v : eigenvalues) top = std::max(top, std::abs(v));
  if (top == 0.0) return 0;
  return static_cast<std::size_t>(std::count_if(
      eigenvalues.begin(), eigenvalues.end(),
      [&](double v) { return std::abs(v) > relative * top; }));
}

}  // namespace hkt::num
