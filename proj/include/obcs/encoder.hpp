#pragma once

// One-bit data acquisition: hard sign quantization for evaluation and a
// tanh surrogate for training, where the sign's zero gradient would stall
// backpropagation.

#include <cmath>

#include "obcs/linalg.hpp"

namespace obcs {

struct EncoderConfig {
  double c = 100.0;        // smooth-sign sharpness, > 0
  bool use_smooth = false;
};

// r = sign(phi x), sign(0) := +1. Every element is exactly +-1.
inline Vector encode_hard(const Matrix& phi, const Vector& x) {
  if (phi.cols != x.size())
    throw ContractViolation("encode_hard: phi.cols != x.len");
  Vector y = matvec(phi, x);
  for (double& v : y) v = sign_pos(v);
  return y;
}

// r = tanh(c * phi x); elements lie in (-1, 1) and approach hard sign as
// c grows.
inline Vector encode_smooth(const Matrix& phi, const Vector& x, double c) {
  if (phi.cols != x.size())
    throw ContractViolation("encode_smooth: phi.cols != x.len");
  if (!(c > 0.0)) throw ContractViolation("encode_smooth: c must be > 0");
  Vector y = matvec(phi, x);
  for (double& v : y) v = std::tanh(c * v);
  return y;
}

// Diag(r) as an explicit matrix. Hot paths keep the diagonal implicit and
// multiply element-wise; this exists for tests and small compositions.
inline Matrix diag_from(const Vector& r) {
  Matrix d(r.size(), r.size());
  for (std::size_t i = 0; i < r.size(); ++i) d(i, i) = r[i];
  return d;
}

}  // namespace obcs
