// SPDX-License-Identifier: Apache-2.0
#include "latnmt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "latnmt/errors.hpp"

namespace latnmt {

namespace {

void require_dims(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension " + std::to_string(a) +
                         " does not match " + std::to_string(b));
  }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  Matrix m(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    require_dims(row.size(), cols, "Matrix::from_rows");
    std::copy(row.begin(), row.end(), m.row(r++).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Vector affine(const Matrix& m, std::span<const double> x) {
  Vector out(m.rows(), 0.0);
  affine_accumulate(m, x, out);
  return out;
}

void affine_accumulate(const Matrix& m, std::span<const double> x, std::span<double> out) {
  require_dims(x.size(), m.cols(), "affine input");
  require_dims(out.size(), m.rows(), "affine output");
  const std::size_t cols = m.cols();
  const double* a = m.values().data();
  for (std::size_t r = 0; r < m.rows(); ++r, a += cols) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += a[c] * x[c];
    out[r] += sum;
  }
}

void affine_transposed_accumulate(const Matrix& m, std::span<const double> g,
                                  std::span<double> out) {
  require_dims(g.size(), m.rows(), "transposed affine input");
  require_dims(out.size(), m.cols(), "transposed affine output");
  const std::size_t cols = m.cols();
  const double* a = m.values().data();
  for (std::size_t r = 0; r < m.rows(); ++r, a += cols) {
    const double gr = g[r];
    for (std::size_t c = 0; c < cols; ++c) out[c] += a[c] * gr;
  }
}

void outer_accumulate(Matrix& grad, std::span<const double> g, std::span<const double> x) {
  require_dims(g.size(), grad.rows(), "outer product rows");
  require_dims(x.size(), grad.cols(), "outer product cols");
  const std::size_t cols = grad.cols();
  double* a = grad.values().data();
  for (std::size_t r = 0; r < grad.rows(); ++r, a += cols) {
    const double gr = g[r];
    for (std::size_t c = 0; c < cols; ++c) a[c] += gr * x[c];
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector sigmoid(std::span<const double> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Vector tanh(std::span<const double> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

Vector hadamard(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size(), b.size(), "hadamard");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size(), b.size(), "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(double scale, std::span<const double> x, std::span<double> out) {
  require_dims(x.size(), out.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += scale * x[i];
}

Vector softmax(std::span<const double> scores) {
  if (scores.empty()) throw DimensionError("softmax of an empty vector");
  const double top = *std::max_element(scores.begin(), scores.end());
  Vector out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Vector concat(std::span<const double> a, std::span<const double> b) {
  Vector out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

Vector central_difference_grad(const ScalarFunction& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw InternalError("finite-difference step must be positive");
  Vector point(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double global_norm(std::span<const std::span<double>> tensors) {
  double sum = 0.0;
  for (const auto& t : tensors) {
    for (double v : t) sum += v * v;
  }
  return std::sqrt(sum);
}

double global_norm_clip(std::span<const std::span<double>> tensors, double max_norm) {
  if (!(max_norm > 0.0)) throw InternalError("clip norm must be positive");
  const double norm = global_norm(tensors);
  if (norm <= max_norm) return norm;

  std::vector<Vector> original;
  original.reserve(tensors.size());
  for (const auto& t : tensors) original.emplace_back(t.begin(), t.end());

  // Rounding can leave the rescaled norm a few ulps above max_norm; shrink
  // the factor until it is not, which also makes clipping idempotent.
  double scale = max_norm / norm;
  while (true) {
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      for (std::size_t i = 0; i < tensors[k].size(); ++i) tensors[k][i] = original[k][i] * scale;
    }
    if (global_norm(tensors) <= max_norm) break;
    scale = std::nextafter(scale, 0.0);
  }
  return norm;
}

double Rng::uniform(double lo, double hi) {
  const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InternalError("Rng::below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

}  // namespace latnmt
