#pragma once

// Hand-written reverse-mode differentiation of the training loss through
// the smooth encoder, the normalized starting point, and all decoder
// layers, plus the central-difference oracle that certifies it.
//
// The backward pass is exact for the loss as computed by loss_forward:
// it chains through every occurrence of phi (encoder code, starting
// point, and the per-layer descent direction) and uses subgradient 0 at
// the kinks of |.| and relu.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "obcs/linalg.hpp"
#include "obcs/signals.hpp"
#include "obcs/unfolded.hpp"

namespace obcs {

struct GradientBundle {
  Matrix d_phi;
  std::vector<double> d_deltas;
  std::vector<Vector> d_taus;

  static GradientBundle zeros_like(const Model& model) {
    GradientBundle g;
    g.d_phi = Matrix(model.m(), model.n());
    g.d_deltas.assign(model.layer_count(), 0.0);
    g.d_taus.assign(model.layer_count(), Vector(model.n(), 0.0));
    return g;
  }

  void add_scaled(const GradientBundle& other, double s) {
    for (std::size_t i = 0; i < d_phi.data.size(); ++i)
      d_phi.data[i] += s * other.d_phi.data[i];
    for (std::size_t i = 0; i < d_deltas.size(); ++i)
      d_deltas[i] += s * other.d_deltas[i];
    for (std::size_t i = 0; i < d_taus.size(); ++i)
      for (std::size_t j = 0; j < d_taus[i].size(); ++j)
        d_taus[i][j] += s * other.d_taus[i][j];
  }

  void scale(double s) {
    for (double& v : d_phi.data) v *= s;
    for (double& v : d_deltas) v *= s;
    for (Vector& t : d_taus)
      for (double& v : t) v *= s;
  }

  bool finite() const {
    if (!all_finite(d_phi)) return false;
    for (double v : d_deltas)
      if (!std::isfinite(v)) return false;
    for (const Vector& t : d_taus)
      if (!all_finite(t)) return false;
    return true;
  }
};

// Pullback of x = v/||v||: grad_v = (I - x x^T) grad_x / ||v||.
inline Vector normalize_pullback(const Vector& x_unit, double raw_norm,
                                 const Vector& grad_out) {
  const double gd = dot(grad_out, x_unit);
  Vector gv(x_unit.size());
  for (std::size_t j = 0; j < x_unit.size(); ++j)
    gv[j] = (grad_out[j] - gd * x_unit[j]) / raw_norm;
  return gv;
}

namespace detail {

// Core adjoint of one layer. Accumulates the phi and code contributions
// into the provided sinks and returns the gradient w.r.t. the layer input.
// Degenerate layers acted as the identity, so the gradient passes through
// untouched and the parameters get nothing.
inline Vector layer_backward_core(const LayerCache& cache,
                                  const Vector& grad_out, const Matrix& phi,
                                  const Vector& code, double delta, double c,
                                  double& d_delta, Vector& d_tau,
                                  Matrix& d_phi_acc, Vector& d_code_acc) {
  const std::size_t n = cache.z_in.size();
  const std::size_t m = code.size();
  d_tau.assign(n, 0.0);
  d_delta = 0.0;
  if (cache.degenerate) return grad_out;

  Vector vbar = normalize_pullback(cache.x_out, cache.v_norm, grad_out);

  // v = sgn_t . relu(|t| - tau)
  Vector tbar(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double w = relu(cache.abs_t_minus_tau[j]);
    const double sg = cache.sgn_t[j];
    const double sgn_bar = vbar[j] * w;
    const double w_bar = vbar[j] * sg;
    const double u_bar = cache.abs_t_minus_tau[j] > 0.0 ? w_bar : 0.0;
    d_tau[j] = -u_bar;
    const double tj = cache.t[j];
    const double abs_grad = tj > 0.0 ? 1.0 : (tj < 0.0 ? -1.0 : 0.0);
    tbar[j] = u_bar * abs_grad + sgn_bar * c * (1.0 - sg * sg);
  }

  // t = (1 + delta d.z) z - delta d
  const double tz = dot(tbar, cache.z_in);
  const double td = dot(tbar, cache.d);
  d_delta = cache.dz * tz - td;
  const double sbar = delta * tz;  // through d.z

  Vector dbar(n);
  for (std::size_t j = 0; j < n; ++j)
    dbar[j] = -delta * tbar[j] + sbar * cache.z_in[j];

  Vector grad_z(n);
  const double a = 1.0 + delta * cache.dz;
  for (std::size_t j = 0; j < n; ++j)
    grad_z[j] = a * tbar[j] + sbar * cache.d[j];

  // d = -phi^T (code . rho_y)
  Vector pbar = matvec(phi, dbar);
  for (double& v : pbar) v = -v;
  for (std::size_t k = 0; k < m; ++k) {
    const double p_k = code[k] * cache.rho_y[k];
    const double* unused = &p_k;
    (void)unused;
  }
  // phi gets -outer(p, dbar); code gets rho_y . pbar
  for (std::size_t k = 0; k < m; ++k) {
    const double p_k = code[k] * cache.rho_y[k];
    if (p_k != 0.0) {
      double* prow = d_phi_acc.row(k);
      for (std::size_t j = 0; j < n; ++j) prow[j] -= p_k * dbar[j];
    }
    d_code_acc[k] += cache.rho_y[k] * pbar[k];
  }

  // rho = relu(-y), y = code . proj
  Vector projbar(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double rho_bar = code[k] * pbar[k];
    const double y_bar = cache.y[k] < 0.0 ? -rho_bar : 0.0;
    projbar[k] = code[k] * y_bar;
    d_code_acc[k] += cache.proj[k] * y_bar;
  }

  // proj = phi z
  for (std::size_t k = 0; k < m; ++k) {
    const double pb = projbar[k];
    if (pb != 0.0) {
      double* prow = d_phi_acc.row(k);
      const double* zrow = cache.z_in.data();
      for (std::size_t j = 0; j < n; ++j) prow[j] += pb * zrow[j];
    }
  }
  Vector zext = matvec_t(phi, projbar);
  for (std::size_t j = 0; j < n; ++j) grad_z[j] += zext[j];

  return grad_z;
}

}  // namespace detail

struct LayerGrads {
  Vector grad_z;
  double d_delta = 0.0;
  Vector d_tau;
  Matrix d_phi_contrib;
  Vector d_code_contrib;
};

// Exact partials of one layer w.r.t. its input, parameters, phi, and the
// code vector, chained with grad_out. Only the smooth-sign path is
// differentiable.
inline LayerGrads layer_backward(const LayerCache& cache,
                                 const Vector& grad_out, const Matrix& phi,
                                 const Vector& code, double delta, double c) {
  if (cache.sgn_mode_hard)
    throw ContractViolation("layer_backward: hard sign path has no gradient");
  LayerGrads g;
  g.d_phi_contrib = Matrix(phi.rows, phi.cols);
  g.d_code_contrib.assign(code.size(), 0.0);
  g.grad_z = detail::layer_backward_core(cache, grad_out, phi, code, delta, c,
                                         g.d_delta, g.d_tau, g.d_phi_contrib,
                                         g.d_code_contrib);
  return g;
}

struct ForwardPass {
  double loss = 0.0;
  AutoencodeResult ae;
};

// Accumulated per-layer reconstruction error plus the positivity
// regularizer on step sizes and thresholds:
//   sum_i w_i ||x - xhat_i||^2 + lambda sum relu(-delta_i)
//                              + lambda sum relu(-tau_ik)
inline ForwardPass loss_forward(const SparseSignal& sig, const Model& model,
                                const std::vector<double>& weights,
                                double lambda,
                                RunMode mode = RunMode::kTrainSmooth) {
  if (mode != RunMode::kTrainSmooth)
    throw ContractViolation("loss_forward: training loss needs the smooth path");
  if (weights.size() != model.layer_count())
    throw ContractViolation("loss_forward: weights.len != L");

  ForwardPass fp;
  fp.ae = autoencode_full(sig, model, mode);

  double loss = 0.0;
  for (std::size_t i = 0; i < model.layer_count(); ++i)
    loss += weights[i] * mse(sig.x, fp.ae.traj.iterates[i + 1]);
  for (double dl : model.params.deltas) loss += lambda * relu(-dl);
  for (const Vector& tau : model.params.taus)
    for (double tv : tau) loss += lambda * relu(-tv);
  fp.loss = loss;
  return fp;
}

// Exact gradient of loss_forward w.r.t. phi, all step sizes, and all
// thresholds. `seed` scales the incoming loss cotangent; the sweep is
// linear in it.
inline GradientBundle loss_backward(const SparseSignal& sig,
                                    const Model& model,
                                    const std::vector<double>& weights,
                                    double lambda, const ForwardPass& fp,
                                    double seed = 1.0) {
  const std::size_t layers = model.layer_count();
  const std::size_t n = model.n();
  GradientBundle bundle = GradientBundle::zeros_like(model);
  Vector code_bar(model.m(), 0.0);

  Vector g(n, 0.0);
  for (std::size_t ii = layers; ii-- > 0;) {
    const Vector& xhat = fp.ae.traj.iterates[ii + 1];
    const double w2 = 2.0 * seed * weights[ii];
    for (std::size_t j = 0; j < n; ++j) g[j] += w2 * (xhat[j] - sig.x[j]);
    g = detail::layer_backward_core(
        fp.ae.caches[ii], g, model.phi, fp.ae.code, model.params.deltas[ii],
        model.c, bundle.d_deltas[ii], bundle.d_taus[ii], bundle.d_phi,
        code_bar);
  }

  // Starting point x0 = normalize(phi^T code); the fallback branch is
  // constant so nothing flows through it.
  if (!fp.ae.x0_fallback) {
    Vector hbar =
        normalize_pullback(fp.ae.traj.iterates[0], fp.ae.x0_norm, g);
    for (std::size_t k = 0; k < model.m(); ++k) {
      const double ck = fp.ae.code[k];
      if (ck != 0.0) {
        double* prow = bundle.d_phi.row(k);
        for (std::size_t j = 0; j < n; ++j) prow[j] += ck * hbar[j];
      }
    }
    Vector cext = matvec(model.phi, hbar);
    for (std::size_t k = 0; k < model.m(); ++k) code_bar[k] += cext[k];
  }

  // Encoder: code = tanh(c * phi x).
  for (std::size_t k = 0; k < model.m(); ++k) {
    const double ck = fp.ae.code[k];
    const double ebar = code_bar[k] * model.c * (1.0 - ck * ck);
    if (ebar != 0.0) {
      double* prow = bundle.d_phi.row(k);
      for (std::size_t j = 0; j < n; ++j) prow[j] += ebar * sig.x[j];
    }
  }

  // Positivity regularizer; relu' at 0 is 0.
  for (std::size_t i = 0; i < layers; ++i) {
    if (model.params.deltas[i] < 0.0) bundle.d_deltas[i] -= seed * lambda;
    const Vector& tau = model.params.taus[i];
    for (std::size_t j = 0; j < n; ++j)
      if (tau[j] < 0.0) bundle.d_taus[i][j] -= seed * lambda;
  }
  return bundle;
}

// --- flat parameter indexing: phi row-major, then deltas, then taus ---

inline std::size_t param_count(const Model& model) {
  return model.m() * model.n() + model.layer_count() +
         model.layer_count() * model.n();
}

inline double get_param(const Model& model, std::size_t idx) {
  const std::size_t mn = model.m() * model.n();
  if (idx < mn) return model.phi.data[idx];
  idx -= mn;
  if (idx < model.layer_count()) return model.params.deltas[idx];
  idx -= model.layer_count();
  return model.params.taus[idx / model.n()][idx % model.n()];
}

inline void set_param(Model& model, std::size_t idx, double value) {
  const std::size_t mn = model.m() * model.n();
  if (idx < mn) {
    model.phi.data[idx] = value;
    return;
  }
  idx -= mn;
  if (idx < model.layer_count()) {
    model.params.deltas[idx] = value;
    return;
  }
  idx -= model.layer_count();
  model.params.taus[idx / model.n()][idx % model.n()] = value;
}

inline double bundle_entry(const GradientBundle& g, std::size_t idx,
                           const Model& model) {
  const std::size_t mn = model.m() * model.n();
  if (idx < mn) return g.d_phi.data[idx];
  idx -= mn;
  if (idx < model.layer_count()) return g.d_deltas[idx];
  idx -= model.layer_count();
  return g.d_taus[idx / model.n()][idx % model.n()];
}

inline std::string param_name(const Model& model, std::size_t idx) {
  const std::size_t mn = model.m() * model.n();
  if (idx < mn)
    return "phi[" + std::to_string(idx / model.n()) + "," +
           std::to_string(idx % model.n()) + "]";
  idx -= mn;
  if (idx < model.layer_count()) return "delta[" + std::to_string(idx) + "]";
  idx -= model.layer_count();
  return "tau[" + std::to_string(idx / model.n()) + "][" +
         std::to_string(idx % model.n()) + "]";
}

// Central finite difference of the full loss per scalar parameter.
inline GradientBundle fd_gradient(const SparseSignal& sig, const Model& model,
                                  const std::vector<double>& weights,
                                  double lambda, double h) {
  if (!(h > 0.0)) throw ContractViolation("fd_gradient: h must be > 0");
  GradientBundle g = GradientBundle::zeros_like(model);
  Model probe = model;
  const std::size_t count = param_count(model);
  for (std::size_t idx = 0; idx < count; ++idx) {
    const double theta = get_param(model, idx);
    set_param(probe, idx, theta + h);
    const double lp = loss_forward(sig, probe, weights, lambda).loss;
    set_param(probe, idx, theta - h);
    const double lm = loss_forward(sig, probe, weights, lambda).loss;
    set_param(probe, idx, theta);
    const double val = (lp - lm) / (2.0 * h);
    const std::size_t mn = model.m() * model.n();
    if (idx < mn)
      g.d_phi.data[idx] = val;
    else if (idx < mn + model.layer_count())
      g.d_deltas[idx - mn] = val;
    else {
      const std::size_t t = idx - mn - model.layer_count();
      g.d_taus[t / model.n()][t % model.n()] = val;
    }
  }
  return g;
}

// Active-set fingerprint of one forward pass: which relu/abs/shrink/guard
// branches fired. Two perturbed passes with equal fingerprints lie on the
// same smooth piece, so central differences are trustworthy between them.
inline std::vector<unsigned char> active_signature(const ForwardPass& fp,
                                                   const Model& model) {
  std::vector<unsigned char> sig;
  sig.reserve(model.layer_count() * (model.m() + 3 * model.n() + 1) + 1);
  sig.push_back(fp.ae.x0_fallback ? 1 : 0);
  for (const LayerCache& c : fp.ae.caches) {
    sig.push_back(c.degenerate ? 1 : 0);
    for (double y : c.y) sig.push_back(y < 0.0 ? 1 : 0);
    for (double t : c.t) sig.push_back(t > 0.0 ? 1 : (t < 0.0 ? 2 : 0));
    for (double u : c.abs_t_minus_tau) sig.push_back(u > 0.0 ? 1 : 0);
  }
  for (double dl : model.params.deltas) sig.push_back(dl < 0.0 ? 1 : 0);
  for (const Vector& tau : model.params.taus)
    for (double tv : tau) sig.push_back(tv < 0.0 ? 1 : 0);
  return sig;
}

struct GradCheckOptions {
  double h = 1e-6;
  double rel_tol = 1e-5;
  double abs_tol = 1e-8;     // applies when |analytic| < near_zero
  double near_zero = 1e-6;
  double break_analytic = 0.0;  // debug: perturb one analytic partial
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_err = 0.0;
  std::size_t total = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // kink-adjacent parameters
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;

  double skip_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(skipped) / total;
  }
};

// Compares every analytic partial against central differences, skipping
// parameters whose +-h interval crosses a kink.
inline GradCheckReport gradcheck_run(const SparseSignal& sig,
                                     const Model& model,
                                     const std::vector<double>& weights,
                                     double lambda,
                                     const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  const ForwardPass fp = loss_forward(sig, model, weights, lambda);
  GradientBundle analytic = loss_backward(sig, model, weights, lambda, fp);
  if (opt.break_analytic != 0.0)
    analytic.d_phi.data[0] += opt.break_analytic;

  Model probe = model;
  report.total = param_count(model);
  for (std::size_t idx = 0; idx < report.total; ++idx) {
    const double theta = get_param(model, idx);
    set_param(probe, idx, theta + opt.h);
    const ForwardPass fpp = loss_forward(sig, probe, weights, lambda);
    set_param(probe, idx, theta - opt.h);
    const ForwardPass fpm = loss_forward(sig, probe, weights, lambda);
    set_param(probe, idx, theta);

    if (active_signature(fpp, probe) != active_signature(fpm, probe)) {
      ++report.skipped;
      continue;
    }
    ++report.checked;
    const double fd = (fpp.loss - fpm.loss) / (2.0 * opt.h);
    const double an = bundle_entry(analytic, idx, model);

    double err;
    bool ok;
    if (std::abs(an) < opt.near_zero && std::abs(fd) < opt.near_zero) {
      err = std::abs(an - fd);
      ok = err <= opt.abs_tol;
      err = ok ? 0.0 : 1.0;  // absolute-regime failures rank as rel 1
    } else {
      const double denom = std::max(std::abs(an), std::abs(fd));
      err = std::abs(an - fd) / denom;
      ok = err <= opt.rel_tol;
    }
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_param = param_name(model, idx);
      report.worst_analytic = an;
      report.worst_fd = fd;
    }
    if (!ok) report.passed = false;
  }
  return report;
}

}  // namespace obcs
