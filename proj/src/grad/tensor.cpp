#include "hkt/grad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>


#include "hkt/error.hpp"

namespace hkt::grad {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows_other() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols_other() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  // v * 0 is 0 for finite v and NaN otherwise; four lanes keep it cheap.
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = data_.size(), body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4)
    for (std::size_t k = 0; k < 4; ++k) acc[k] += data_[i + k] * 0.0;
  for (std::size_t i = body; i < n; ++i) acc[0] += data_[i] * 0.0;
  return acc[0] + acc[1] + acc[2] + acc[3] == 0.0;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::transposed() const {
  std::size_t r = rows(), c = cols();
  Tensor out = matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = (*this)(i, j);
  return out;
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

double frobenius_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace kernels {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;
}  // namespace

// C (m x n) += A (m x k) * B (k x n), row-major.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  MMap(c, m, n).noalias() += CMap(a, m, k) * CMap(b, k, n);
}

// C += A * B^T, B is n x k.
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  MMap(c, m, n).noalias() += CMap(a, m, k) * CMap(b, n, k).transpose();
}

// C += A^T * B, A is k x m.
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  MMap(c, m, n).noalias() += CMap(a, k, m).transpose() * CMap(b, k, n);
}

}  // namespace kernels

namespace {
void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  Tensor c = Tensor::matrix(a.rows(), b.cols());
  kernels::gemm_nn(a.rows(), a.cols(), b.cols(), a.data().data(), b.data().data(),
                   c.data().data());
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                         " * " + shape_str(b.shape()) + "^T");
  }
  Tensor c = Tensor::matrix(a.rows(), b.rows());
  kernels::gemm_nt(a.rows(), a.cols(), b.rows(), a.data().data(), b.data().data(),
                   c.data().data());
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_tn");
  require_2d(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: inner dimensions differ, " + shape_str(a.shape()) +
                         "^T * " + shape_str(b.shape()));
  }
  Tensor c = Tensor::matrix(a.cols(), b.cols());
  kernels::gemm_tn(a.cols(), a.rows(), b.cols(), a.data().data(), b.data().data(),
                   c.data().data());
  return c;
}

}  // namespace hkt::grad
