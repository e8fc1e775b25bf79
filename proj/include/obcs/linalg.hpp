#pragma once

// Minimal dense double-precision kernels shared by every other module.
// Row-major storage, no external dependencies; problem sizes here are a
// few thousand elements at most.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace obcs {

using Vector = std::vector<double>;

// Thrown when a caller breaks an operation's precondition (dimension
// mismatch, invalid parameter range).
struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows && j < cols);
    return data[i * cols + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows && j < cols);
    return data[i * cols + j];
  }

  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

// y = A x
inline Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols != x.size())
    throw ContractViolation("matvec: A.cols=" + std::to_string(a.cols) +
                            " != x.len=" + std::to_string(x.size()));
  Vector y(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* r = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

// x = A^T y, computed by accumulating scaled rows so access stays contiguous.
inline Vector matvec_t(const Matrix& a, const Vector& y) {
  if (a.rows != y.size())
    throw ContractViolation("matvec_t: A.rows=" + std::to_string(a.rows) +
                            " != y.len=" + std::to_string(y.size()));
  Vector x(a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* r = a.row(i);
    const double yi = y[i];
    for (std::size_t j = 0; j < a.cols; ++j) x[j] += yi * r[j];
  }
  return x;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

inline double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw ContractViolation("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(const Vector& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

template <class F>
inline Vector ewise(const Vector& x, F&& f) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

inline Vector hadamard(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw ContractViolation("hadamard: length mismatch");
  Vector y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

inline Vector scaled(const Vector& x, double c) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = c * x[i];
  return y;
}

inline Vector add(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ContractViolation("add: length mismatch");
  Vector y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

inline Vector sub(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ContractViolation("sub: length mismatch");
  Vector y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
  return y;
}

// x / ||x||_2; the caller guarantees x is not (numerically) zero.
inline Vector normalized(const Vector& x) {
  const double n = norm2(x);
  assert(n > 0.0);
  return scaled(x, 1.0 / n);
}

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

// sign with sign(0) := +1 so quantized codes never contain zeros.
inline double sign_pos(double v) { return v < 0.0 ? -1.0 : 1.0; }

inline bool all_finite(const Vector& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool all_finite(const Matrix& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace obcs
