// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 kernels. Every reduction sums in ascending index order so
// results are bit-reproducible.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace latnmt {

using Vector = std::vector<double>;

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// M x. Throws DimensionError unless x.size() == M.cols().
Vector affine(const Matrix& m, std::span<const double> x);
/// out += M x
void affine_accumulate(const Matrix& m, std::span<const double> x, std::span<double> out);
/// out += M^T g
void affine_transposed_accumulate(const Matrix& m, std::span<const double> g, std::span<double> out);
/// G += g x^T
void outer_accumulate(Matrix& grad, std::span<const double> g, std::span<const double> x);

double sigmoid(double x);
Vector sigmoid(std::span<const double> x);
Vector tanh(std::span<const double> x);
Vector hadamard(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
/// out += scale * x
void axpy(double scale, std::span<const double> x, std::span<double> out);

/// Max-subtracted softmax; output is positive and sums to one.
Vector softmax(std::span<const double> scores);

Vector concat(std::span<const double> a, std::span<const double> b);

bool all_finite(std::span<const double> x);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Component i is (f(x + h e_i) - f(x - h e_i)) / (2h).
Vector central_difference_grad(const ScalarFunction& f, std::span<const double> x,
                               double h = 1e-5);

/// sqrt of the sum of squares of every entry, summed tensor by tensor in order.
double global_norm(std::span<const std::span<double>> tensors);

/// Scales every entry by max_norm / norm when the joint norm exceeds
/// max_norm. The clipped norm never exceeds max_norm, so clipping twice is
/// the same as clipping once. Returns the joint norm before clipping.
double global_norm_clip(std::span<const std::span<double>> tensors, double max_norm);

/// Deterministic random source shared by initialization, shuffling and the
/// toy-corpus generator. Uniform draws use the top 53 bits of mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace latnmt
