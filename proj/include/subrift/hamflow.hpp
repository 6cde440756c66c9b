#pragma once

#include <cmath>
#include <vector>

#include "subrift/model.hpp"

namespace subrift {

struct PhasePoint {
  Vec x;
  Vec p;
};

struct FlowOptions {
  int steps = 1000;
  double escape_bound = 1e6;
};

// Discretized bicharacteristic: N+1 phase points on the uniform grid of
// [0, T], with the initial Hamiltonian recorded for conservation checks.
struct BicharPath {
  std::vector<Vec> x;
  std::vector<Vec> p;
  double T = 1.0;
  double H0 = 0.0;

  int steps() const { return static_cast<int>(x.size()) - 1; }
  double time(int i) const { return T * i / steps(); }

  // piecewise-linear interpolation of the stored grid
  Vec interp_x(double t) const { return interp(x, t); }
  Vec interp_p(double t) const { return interp(p, t); }

 private:
  Vec interp(const std::vector<Vec>& g, double t) const {
    int N = steps();
    double s = t / T * N;
    int i = static_cast<int>(std::floor(s));
    if (i < 0) i = 0;
    if (i >= N) return g[N];
    double w = s - i;
    return (1.0 - w) * g[i] + w * g[i + 1];
  }
};

// Per-point coefficients of the Hamiltonian vector field and its
// linearization.
struct FlowCoeffs {
  Vec hdot;   // m: <p, X_l>
  Vec xdot;   // d
  Vec pdot;   // d
  Mat a;      // diffusivity
  Mat Axx;    // d xdot / dx
  Mat Cpx;    // d pdot / dx
  Mat B;      // sum_l hdot_l grad X_l   (frame transport generator)
};

inline FlowCoeffs flow_coeffs(const Model& model, const Vec& x, const Vec& p) {
  int d = model.d;
  FlowCoeffs c;
  c.hdot = Vec::Zero(model.m);
  c.xdot = Vec::Zero(d);
  c.pdot = Vec::Zero(d);
  c.a = Mat::Zero(d, d);
  c.Axx = Mat::Zero(d, d);
  c.Cpx = Mat::Zero(d, d);
  c.B = Mat::Zero(d, d);
  for (int l = 0; l < model.m; ++l) {
    FieldEval fe = model.frame[l].eval(x);
    double ul = p.dot(fe.value);
    Vec g = fe.jac.transpose() * p;  // <p, grad X_l>
    Mat W = Mat::Zero(d, d);
    for (int comp = 0; comp < d; ++comp) W.noalias() += p[comp] * fe.hess[comp];
    c.hdot[l] = ul;
    c.xdot.noalias() += ul * fe.value;
    c.pdot.noalias() -= ul * g;
    c.a.noalias() += fe.value * fe.value.transpose();
    c.Axx.noalias() += fe.value * g.transpose() + ul * fe.jac;
    c.Cpx.noalias() -= g * g.transpose() + ul * W;
    c.B.noalias() += ul * fe.jac;
  }
  return c;
}

inline double hamiltonian(const Model& model, const PhasePoint& lam) {
  if (!all_finite(lam.x) || !all_finite(lam.p))
    throw NonFiniteError("hamiltonian: non-finite phase point");
  double h_frame = 0.0;
  for (int l = 0; l < model.m; ++l) {
    double ul = lam.p.dot(model.frame[l].value(lam.x));
    h_frame += ul * ul;
  }
  h_frame *= 0.5;
  double h_quad = 0.5 * lam.p.dot(diffusivity(model, lam.x) * lam.p);
  if (std::abs(h_frame - h_quad) > 1e-12 * (1.0 + std::abs(h_frame)))
    throw ModelEvaluationError("hamiltonian: frame and quadratic-form routes disagree", -1);
  return h_frame;
}

namespace detail {

// Joint state of the flow, its variational blocks (k columns) and the frame
// transport matrix. Unused blocks have zero columns.
struct AugState {
  Vec x, p;
  Mat Jx, Jp;  // d x k
  Mat u;       // d x d or 0 x 0
};

struct AugDeriv {
  Vec x, p;
  Mat Jx, Jp, u;
};

inline AugDeriv aug_rhs(const Model& model, const AugState& s, double sign) {
  FlowCoeffs c = flow_coeffs(model, s.x, s.p);
  AugDeriv d;
  d.x = sign * c.xdot;
  d.p = sign * c.pdot;
  if (s.Jx.cols() > 0) {
    d.Jx = sign * (c.Axx * s.Jx + c.a * s.Jp);
    d.Jp = sign * (c.Cpx * s.Jx - c.Axx.transpose() * s.Jp);
  } else {
    d.Jx.resize(s.x.size(), 0);
    d.Jp.resize(s.x.size(), 0);
  }
  if (s.u.cols() > 0)
    d.u = sign * (c.B * s.u);
  else
    d.u.resize(0, 0);
  return d;
}

inline AugState aug_axpy(const AugState& s, double h, const AugDeriv& d) {
  AugState r;
  r.x = s.x + h * d.x;
  r.p = s.p + h * d.p;
  if (s.Jx.cols() > 0) {
    r.Jx = s.Jx + h * d.Jx;
    r.Jp = s.Jp + h * d.Jp;
  } else {
    r.Jx = s.Jx;
    r.Jp = s.Jp;
  }
  if (s.u.cols() > 0)
    r.u = s.u + h * d.u;
  else
    r.u = s.u;
  return r;
}

// Classical RK4 step of the joint system; sharing stage points makes the
// integrated variational blocks the exact derivative of the discrete flow.
inline AugState aug_rk4_step(const Model& model, const AugState& s, double h, double sign) {
  AugDeriv k1 = aug_rhs(model, s, sign);
  AugDeriv k2 = aug_rhs(model, aug_axpy(s, 0.5 * h, k1), sign);
  AugDeriv k3 = aug_rhs(model, aug_axpy(s, 0.5 * h, k2), sign);
  AugDeriv k4 = aug_rhs(model, aug_axpy(s, h, k3), sign);
  AugState r;
  r.x = s.x + (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
  r.p = s.p + (h / 6.0) * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
  if (s.Jx.cols() > 0) {
    r.Jx = s.Jx + (h / 6.0) * (k1.Jx + 2.0 * k2.Jx + 2.0 * k3.Jx + k4.Jx);
    r.Jp = s.Jp + (h / 6.0) * (k1.Jp + 2.0 * k2.Jp + 2.0 * k3.Jp + k4.Jp);
  } else {
    r.Jx = s.Jx;
    r.Jp = s.Jp;
  }
  if (s.u.cols() > 0)
    r.u = s.u + (h / 6.0) * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u);
  else
    r.u = s.u;
  return r;
}

inline void check_state(const AugState& s, double bound, const char* where) {
  if (!all_finite(s.x) || !all_finite(s.p))
    throw NonFiniteError(std::string(where) + ": non-finite state");
  if (s.x.cwiseAbs().maxCoeff() > bound || s.p.cwiseAbs().maxCoeff() > bound)
    throw FlowEscapeError(std::string(where) + ": phase point escaped bound");
}

}  // namespace detail

// Integrates the bicharacteristic system
//   xdot = sum_l <p, X_l> X_l,   pdot = -sum_l <p, X_l> <p, grad X_l>
// with fixed-step RK4 on [0, T].
inline BicharPath flow(const Model& model, const PhasePoint& lam0, double T,
                       const FlowOptions& opts = {}) {
  if (opts.steps < 2) throw ConfigError("flow: need at least 2 steps");
  BicharPath path;
  path.T = T;
  path.H0 = hamiltonian(model, lam0);
  int N = opts.steps;
  double h = T / N;
  detail::AugState s;
  s.x = lam0.x;
  s.p = lam0.p;
  s.Jx.resize(model.d, 0);
  s.Jp.resize(model.d, 0);
  s.u.resize(0, 0);
  path.x.reserve(N + 1);
  path.p.reserve(N + 1);
  path.x.push_back(s.x);
  path.p.push_back(s.p);
  for (int i = 0; i < N; ++i) {
    s = detail::aug_rk4_step(model, s, h, +1.0);
    detail::check_state(s, opts.escape_bound, "flow");
    path.x.push_back(s.x);
    path.p.push_back(s.p);
  }
  return path;
}

inline double hamiltonian_drift_report(const Model& model, const BicharPath& path) {
  double worst = 0.0;
  for (size_t i = 0; i < path.x.size(); ++i) {
    double H = hamiltonian(model, {path.x[i], path.p[i]});
    worst = std::max(worst, std::abs(H - path.H0) / (1.0 + path.H0));
  }
  return worst;
}

// trapezoid quadrature of <p, a(x) p> along the path (equals 2 H0 up to
// integration error)
inline double path_energy_quadrature(const Model& model, const BicharPath& path) {
  int N = path.steps();
  double h = path.T / N;
  double sum = 0.0;
  for (int i = 0; i <= N; ++i) {
    double f = path.p[i].dot(diffusivity(model, path.x[i]) * path.p[i]);
    sum += (i == 0 || i == N) ? 0.5 * f : f;
  }
  return sum * h;
}

// Jacobi data along a bicharacteristic on [0,1]:
//   J_t: derivative of the projected flow w.r.t. initial momentum (J_0 = 0)
//   K_t: same w.r.t. final momentum through the backward flow (K_1 = 0),
//        with the sign fixed so that J_1 = K_0^T
//   u_t: frame transport, du = sum grad X_l u dh^l, u_0 = I
//   C1  = int u^-1 a u^-T dt,  C1bar = u_1 C1 u_1^T
struct JacobiData {
  std::vector<Mat> J;
  std::vector<Mat> K;
  std::vector<Mat> Kp;  // momentum block of the K variation (gives Kdot)
  std::vector<Mat> u;
  std::vector<Vec> hdot;  // control rate <p, X_l> on the grid
  Mat C1;
  Mat C1bar;
  Vec lambda1;  // final momentum covector
};

inline JacobiData jacobi_pair(const Model& model, const BicharPath& path,
                              const FlowOptions& opts = {}) {
  int N = path.steps();
  int d = model.d;
  double h = path.T / N;
  JacobiData jd;
  jd.J.resize(N + 1);
  jd.K.resize(N + 1);
  jd.Kp.resize(N + 1);
  jd.u.resize(N + 1);
  jd.hdot.resize(N + 1);

  // forward pass: J and u
  detail::AugState s;
  s.x = path.x[0];
  s.p = path.p[0];
  s.Jx = Mat::Zero(d, d);
  s.Jp = Mat::Identity(d, d);
  s.u = Mat::Identity(d, d);
  jd.J[0] = s.Jx;
  jd.u[0] = s.u;
  jd.hdot[0] = flow_coeffs(model, s.x, s.p).hdot;
  for (int i = 0; i < N; ++i) {
    s = detail::aug_rk4_step(model, s, h, +1.0);
    detail::check_state(s, opts.escape_bound, "jacobi_pair");
    jd.J[i + 1] = s.Jx;
    jd.u[i + 1] = s.u;
    jd.hdot[i + 1] = flow_coeffs(model, s.x, s.p).hdot;
  }
  jd.lambda1 = s.p;

  // backward pass from the recomputed endpoint: K_1 = 0 with initial momentum
  // perturbation -I
  detail::AugState b;
  b.x = s.x;
  b.p = s.p;
  b.Jx = Mat::Zero(d, d);
  b.Jp = -Mat::Identity(d, d);
  b.u.resize(0, 0);
  jd.K[N] = b.Jx;
  jd.Kp[N] = b.Jp;
  for (int j = 0; j < N; ++j) {
    b = detail::aug_rk4_step(model, b, h, -1.0);
    detail::check_state(b, opts.escape_bound, "jacobi_pair(backward)");
    jd.K[N - 1 - j] = b.Jx;
    jd.Kp[N - 1 - j] = b.Jp;
  }

  // C1 by composite trapezoid of u^-1 a u^-T
  jd.C1 = Mat::Zero(d, d);
  for (int i = 0; i <= N; ++i) {
    Eigen::PartialPivLU<Mat> lu(jd.u[i]);
    double rcond = jd.u[i].cwiseAbs().maxCoeff();
    Mat uinv = lu.solve(Mat::Identity(d, d));
    if (!all_finite(uinv) || uinv.cwiseAbs().maxCoeff() > 1e12 * (1.0 + rcond))
      throw LinearizationError("jacobi_pair: singular frame transport u_t");
    Mat f = uinv * diffusivity(model, path.x[i]) * uinv.transpose();
    jd.C1 += ((i == 0 || i == N) ? 0.5 : 1.0) * f;
  }
  jd.C1 *= h;
  jd.C1bar = jd.u[N] * jd.C1 * jd.u[N].transpose();
  return jd;
}

// Time derivative of K at grid index i, from the stored variational blocks.
inline Mat kdot_at(const Model& model, const BicharPath& path, const JacobiData& jd, int i) {
  FlowCoeffs c = flow_coeffs(model, path.x[i], path.p[i]);
  return c.Axx * jd.K[i] + c.a * jd.Kp[i];
}

struct EquivalenceReport {
  double max_a_gap = 0.0;
  double flow_endpoint_gap = 0.0;
};

// Compares two models sharing one diffusivity: pointwise a-gap on probe
// points and endpoint gap of the flow run under each frame from the same
// initial phase point (the flow depends on the frame only through a).
inline EquivalenceReport structure_equivalence_probe(const Model& ma, const Model& mb,
                                                     const std::vector<Vec>& points,
                                                     const PhasePoint& lam0, double T = 1.0,
                                                     const FlowOptions& opts = {}) {
  if (ma.d != mb.d) throw ConfigError("structure_equivalence_probe: dimension mismatch");
  EquivalenceReport rep;
  for (const Vec& x : points) {
    Mat gap = diffusivity(ma, x) - diffusivity(mb, x);
    rep.max_a_gap = std::max(rep.max_a_gap, gap.cwiseAbs().maxCoeff());
  }
  BicharPath pa = flow(ma, lam0, T, opts);
  BicharPath pb = flow(mb, lam0, T, opts);
  int N = pa.steps();
  rep.flow_endpoint_gap = (pa.x[N] - pb.x[N]).norm();
  return rep;
}

}  // namespace subrift
