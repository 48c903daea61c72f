#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ebomlc/error.hpp"

namespace ebomlc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major fp64 array. A rank-0 tensor (empty shape) is a scalar.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("Tensor: shape " + shape_str(shape_) + " does not match " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  /// Rows and columns when viewed as a matrix over the last axis.
  std::size_t rows() const { return shape_.empty() ? 1 : size() / shape_.back(); }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  double item() const {
    if (data_.size() != 1) throw UsageError("Tensor::item on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace kernels {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

// C(n,m) += A(n,k) * B(k,m)
inline void matmul_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                       std::size_t m) {
  const auto N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k), M = static_cast<Eigen::Index>(m);
  Map(c, N, M).noalias() += ConstMap(a, N, K) * ConstMap(b, K, M);
}

// dA(n,k) += dC(n,m) * B(k,m)^T
inline void matmul_grad_a(const double* dc, const double* b, double* da, std::size_t n,
                          std::size_t k, std::size_t m) {
  const auto N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k), M = static_cast<Eigen::Index>(m);
  Map(da, N, K).noalias() += ConstMap(dc, N, M) * ConstMap(b, K, M).transpose();
}

// dB(k,m) += A(n,k)^T * dC(n,m)
inline void matmul_grad_b(const double* a, const double* dc, double* db, std::size_t n,
                          std::size_t k, std::size_t m) {
  const auto N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k), M = static_cast<Eigen::Index>(m);
  Map(db, K, M).noalias() += ConstMap(a, N, K).transpose() * ConstMap(dc, N, M);
}

}  // namespace kernels

/// Plain (untracked) matrix product of rank-2 tensors.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor c(Shape{a.dim(0), b.dim(1)});
  kernels::matmul_acc(a.data().data(), b.data().data(), c.data().data(), a.dim(0), a.dim(1),
                      b.dim(1));
  return c;
}

/// Row-wise softmax over the last axis with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t n = x.rows(), k = x.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = x.data().data() + i * k;
    double* out = y.data().data() + i * k;
    const double mx = *std::max_element(in, in + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - mx);
      s += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] /= s;
  }
  return y;
}

inline Tensor log_softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t n = x.rows(), k = x.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = x.data().data() + i * k;
    double* out = y.data().data() + i * k;
    const double mx = *std::max_element(in, in + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(in[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) out[j] = in[j] - lse;
  }
  return y;
}

/// Index of the row maximum; ties resolve to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Tensor& x) {
  std::vector<std::size_t> out(x.rows());
  const std::size_t k = x.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = x.data().data() + i * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = best;
  }
  return out;
}

}  // namespace ebomlc
