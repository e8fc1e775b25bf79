#pragma once

// Renormalized fixed-point iteration for one-bit sparse recovery: a
// consistency-penalty gradient step on the unit sphere, soft shrinkage,
// then renormalization. This is the fixed-parameter baseline; the
// learnable per-layer variant lives in unfolded.hpp.

#include <cassert>
#include <cstddef>
#include <vector>

#include "obcs/linalg.hpp"

namespace obcs {

struct RfpiConfig {
  // Step size and penalty factor, tuned once on a held-out seed and
  // frozen (see configs/); the shrinkage threshold is delta / alpha.
  double delta = 0.05;
  double alpha = 5.0;
  std::size_t iters = 30;

  double tau() const { return delta / alpha; }
};

struct Trajectory {
  std::vector<Vector> iterates;  // x0 .. xL
  bool degenerate = false;       // some step shrank everything to zero
  std::ptrdiff_t first_degenerate = -1;

  const Vector& back() const { return iterates.back(); }
  std::size_t steps() const { return iterates.size() - 1; }
};

struct RfpiStep {
  Vector x;
  bool degenerate = false;
};

// One update: d = -(R phi)^T max(-R phi x, 0); tangent gradient step
// t = (1 + delta d.x) x - delta d; per-coordinate soft shrink by tau;
// renormalize. A shrink that kills every coordinate is signalled as
// degenerate and returns x_prev unchanged.
inline RfpiStep rfpi_step(const Vector& x_prev, const Matrix& phi,
                          const Vector& code, double delta,
                          const Vector& tau) {
  if (phi.cols != x_prev.size() || phi.rows != code.size())
    throw ContractViolation("rfpi_step: dimension mismatch");
  if (tau.size() != x_prev.size())
    throw ContractViolation("rfpi_step: tau length mismatch");
  assert(std::abs(norm2(x_prev) - 1.0) <= 1e-9);
#ifndef NDEBUG
  for (double tv : tau) assert(tv >= -1e-6);
#endif

  const std::size_t n = x_prev.size();
  const std::size_t m = code.size();

  Vector y = matvec(phi, x_prev);
  for (std::size_t k = 0; k < m; ++k) y[k] *= code[k];

  Vector p(m);
  for (std::size_t k = 0; k < m; ++k) p[k] = code[k] * relu(-y[k]);
  Vector d = matvec_t(phi, p);
  for (double& v : d) v = -v;

  const double dz = dot(d, x_prev);
  Vector t(n);
  for (std::size_t j = 0; j < n; ++j)
    t[j] = (1.0 + delta * dz) * x_prev[j] - delta * d[j];

  Vector v(n);
  for (std::size_t j = 0; j < n; ++j)
    v[j] = sign_pos(t[j]) * relu(std::abs(t[j]) - tau[j]);

  const double nv = norm2(v);
  if (nv < 1e-12) return {x_prev, true};
  for (double& w : v) w /= nv;
  return {std::move(v), false};
}

inline RfpiStep rfpi_step(const Vector& x_prev, const Matrix& phi,
                          const Vector& code, double delta, double tau) {
  return rfpi_step(x_prev, phi, code, delta,
                   Vector(x_prev.size(), tau));
}

// Starting point: normalize(phi^T r); falls back to e1 when that vector is
// numerically zero.
inline Vector init_x0(const Matrix& phi, const Vector& code) {
  if (phi.rows != code.size())
    throw ContractViolation("init_x0: dimension mismatch");
  Vector h = matvec_t(phi, code);
  const double nh = norm2(h);
  if (nh < 1e-15) {
    Vector e1(phi.cols, 0.0);
    e1[0] = 1.0;
    return e1;
  }
  for (double& v : h) v /= nh;
  return h;
}

// Fixed (delta, tau) iteration from a unit-norm x0. A degenerate step
// keeps the previous iterate and flags the trajectory instead of aborting,
// so batch evaluation stays total.
inline Trajectory rfpi_solve(const Vector& code, const Matrix& phi,
                             const RfpiConfig& cfg, const Vector& x0) {
  assert(std::abs(norm2(x0) - 1.0) <= 1e-9);
  Trajectory traj;
  traj.iterates.reserve(cfg.iters + 1);
  traj.iterates.push_back(x0);
  const Vector tau(phi.cols, cfg.tau());
  for (std::size_t i = 0; i < cfg.iters; ++i) {
    RfpiStep s =
        rfpi_step(traj.iterates.back(), phi, code, cfg.delta, tau);
    if (s.degenerate && !traj.degenerate) {
      traj.degenerate = true;
      traj.first_degenerate = static_cast<std::ptrdiff_t>(i);
    }
    traj.iterates.push_back(std::move(s.x));
  }
  return traj;
}

// Same iteration but with a per-step threshold vector (fixed step size).
// This is how learned threshold schedules are replayed inside the plain
// solver.
inline Trajectory rfpi_solve_scheduled(const Vector& code, const Matrix& phi,
                                       double delta,
                                       const std::vector<Vector>& taus,
                                       const Vector& x0) {
  Trajectory traj;
  traj.iterates.reserve(taus.size() + 1);
  traj.iterates.push_back(x0);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    RfpiStep s = rfpi_step(traj.iterates.back(), phi, code, delta, taus[i]);
    if (s.degenerate && !traj.degenerate) {
      traj.degenerate = true;
      traj.first_degenerate = static_cast<std::ptrdiff_t>(i);
    }
    traj.iterates.push_back(std::move(s.x));
  }
  return traj;
}

}  // namespace obcs
