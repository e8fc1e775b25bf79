#pragma once

// Learnable unfolded decoder: L composed layers, each one iteration of the
// renormalized fixed-point update with its own step size and threshold
// vector. Forward passes record every intermediate needed by the
// hand-written backward pass in grad.hpp.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "obcs/encoder.hpp"
#include "obcs/linalg.hpp"
#include "obcs/rfpi.hpp"
#include "obcs/signals.hpp"

namespace obcs {

enum class SignMode { kSmooth, kHard };
enum class RunMode { kTrainSmooth, kEvalHard };

struct DecoderParams {
  std::vector<double> deltas;  // one step size per layer
  std::vector<Vector> taus;    // one length-n threshold vector per layer

  std::size_t layer_count() const { return deltas.size(); }

  static DecoderParams tied(std::size_t layers, std::size_t n, double delta,
                            double tau) {
    DecoderParams p;
    p.deltas.assign(layers, delta);
    p.taus.assign(layers, Vector(n, tau));
    return p;
  }
};

struct Model {
  Matrix phi;           // m x n sensing matrix
  DecoderParams params;
  double c = 100.0;     // smooth-sign sharpness shared by encoder and decoder

  std::size_t n() const { return phi.cols; }
  std::size_t m() const { return phi.rows; }
  std::size_t layer_count() const { return params.layer_count(); }

  void validate() const {
    if (phi.rows == 0 || phi.cols == 0)
      throw ContractViolation("model: empty sensing matrix");
    if (params.deltas.empty())
      throw ContractViolation("model: needs at least one layer");
    if (params.taus.size() != params.deltas.size())
      throw ContractViolation("model: taus/deltas layer count mismatch");
    for (const Vector& t : params.taus)
      if (t.size() != phi.cols)
        throw ContractViolation("model: tau length != n");
    if (!(c > 0.0)) throw ContractViolation("model: c must be > 0");
  }
};

// Everything one layer computed, enough to replay the output bit-exactly
// and to run the backward pass without re-touching phi.
struct LayerCache {
  std::size_t layer_index = 0;
  double delta = 0.0;       // step size this layer ran with
  bool hard_sign = false;   // which sign path produced sgn_t
  Vector z_in;              // layer input, unit norm
  Vector proj;              // phi z
  Vector y;                 // code . proj
  Vector rho_y;             // max(-y, 0)
  Vector d;                 // -phi^T (code . rho_y)
  double dz = 0.0;          // d . z
  Vector t;                 // gradient-step result
  Vector abs_t_minus_tau;   // |t| - tau
  Vector sgn_t;             // tanh(c t) or hard sign(t)
  Vector v;                 // sgn_t . relu(|t| - tau)
  double v_norm = 0.0;
  Vector x_out;             // v / ||v|| (or z_in when degenerate)
  bool degenerate = false;
};

// One decoder layer. Mirrors rfpi_step but with per-layer parameters, a
// selectable sign path, and full caching.
inline std::pair<Vector, LayerCache> layer_forward(
    const Vector& z, const Matrix& phi, const Vector& code, double delta,
    const Vector& tau, double c, SignMode sign_mode,
    std::size_t layer_index = 0) {
  if (phi.cols != z.size() || phi.rows != code.size())
    throw ContractViolation("layer_forward: dimension mismatch");
  if (tau.size() != z.size())
    throw ContractViolation("layer_forward: tau length mismatch");
  assert(std::abs(norm2(z) - 1.0) <= 1e-6);

  const std::size_t n = z.size();
  const std::size_t m = code.size();

  LayerCache cache;
  cache.layer_index = layer_index;
  cache.delta = delta;
  cache.hard_sign = sign_mode == SignMode::kHard;
  cache.z_in = z;

  cache.proj = matvec(phi, z);
  cache.y.resize(m);
  for (std::size_t k = 0; k < m; ++k) cache.y[k] = code[k] * cache.proj[k];

  cache.rho_y.resize(m);
  for (std::size_t k = 0; k < m; ++k) cache.rho_y[k] = relu(-cache.y[k]);

  Vector p(m);
  for (std::size_t k = 0; k < m; ++k) p[k] = code[k] * cache.rho_y[k];
  cache.d = matvec_t(phi, p);
  for (double& v : cache.d) v = -v;

  cache.dz = dot(cache.d, z);
  cache.t.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    cache.t[j] = (1.0 + delta * cache.dz) * z[j] - delta * cache.d[j];

  cache.abs_t_minus_tau.resize(n);
  cache.sgn_t.resize(n);
  cache.v.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    cache.abs_t_minus_tau[j] = std::abs(cache.t[j]) - tau[j];
    cache.sgn_t[j] = sign_mode == SignMode::kSmooth
                         ? std::tanh(c * cache.t[j])
                         : sign_pos(cache.t[j]);
    cache.v[j] = cache.sgn_t[j] * relu(cache.abs_t_minus_tau[j]);
  }

  cache.v_norm = norm2(cache.v);
  if (cache.v_norm < 1e-12) {
    cache.degenerate = true;
    cache.x_out = z;
    return {z, std::move(cache)};
  }
  cache.x_out.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    cache.x_out[j] = cache.v[j] / cache.v_norm;
  Vector out = cache.x_out;
  return {std::move(out), std::move(cache)};
}

// Applies all L layers in order; trajectory holds x0 plus every layer
// output, caches align with layers.
inline std::pair<Trajectory, std::vector<LayerCache>> decoder_forward(
    const Vector& code, const Model& model, const Vector& x0,
    SignMode sign_mode) {
  const std::size_t layers = model.layer_count();
  Trajectory traj;
  traj.iterates.reserve(layers + 1);
  traj.iterates.push_back(x0);
  std::vector<LayerCache> caches;
  caches.reserve(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    auto [out, cache] =
        layer_forward(traj.iterates.back(), model.phi, code,
                      model.params.deltas[i], model.params.taus[i], model.c,
                      sign_mode, i);
    if (cache.degenerate && !traj.degenerate) {
      traj.degenerate = true;
      traj.first_degenerate = static_cast<std::ptrdiff_t>(i);
    }
    traj.iterates.push_back(std::move(out));
    caches.push_back(std::move(cache));
  }
  return {std::move(traj), std::move(caches)};
}

// Full encode/initialize/decode pipeline state for one signal.
struct AutoencodeResult {
  Vector code;        // encoder output (smooth or hard)
  Vector meas;        // phi x, kept for the encoder backward pass
  Vector x0_raw;      // phi^T code before normalization
  double x0_norm = 0.0;
  bool x0_fallback = false;  // x0_raw was numerically zero -> e1
  Trajectory traj;
  std::vector<LayerCache> caches;
};

inline AutoencodeResult autoencode_full(const SparseSignal& sig,
                                        const Model& model, RunMode mode) {
  if (sig.x.size() != model.n())
    throw ContractViolation("autoencode: signal length != model n");

  AutoencodeResult r;
  r.meas = matvec(model.phi, sig.x);
  r.code.resize(model.m());
  if (mode == RunMode::kTrainSmooth) {
    for (std::size_t k = 0; k < model.m(); ++k)
      r.code[k] = std::tanh(model.c * r.meas[k]);
  } else {
    for (std::size_t k = 0; k < model.m(); ++k)
      r.code[k] = sign_pos(r.meas[k]);
  }

  r.x0_raw = matvec_t(model.phi, r.code);
  r.x0_norm = norm2(r.x0_raw);
  Vector x0;
  if (r.x0_norm < 1e-15) {
    r.x0_fallback = true;
    x0.assign(model.n(), 0.0);
    x0[0] = 1.0;
  } else {
    x0 = scaled(r.x0_raw, 1.0 / r.x0_norm);
  }

  const SignMode sm =
      mode == RunMode::kTrainSmooth ? SignMode::kSmooth : SignMode::kHard;
  auto [traj, caches] = decoder_forward(r.code, model, x0, sm);
  r.traj = std::move(traj);
  r.caches = std::move(caches);
  return r;
}

inline Trajectory autoencode(const SparseSignal& sig, const Model& model,
                             RunMode mode) {
  return autoencode_full(sig, model, mode).traj;
}

}  // namespace obcs
