#pragma once

#include <cmath>
#include <string>

#include "subrift/model.hpp"

namespace subrift {

namespace detail {

inline SmoothField constant_field(const Vec& v) {
  int d = static_cast<int>(v.size());
  SmoothField f;
  f.value = [v](const Vec&) { return v; };
  f.jac = [d](const Vec&) { return Mat::Zero(d, d); };
  f.hess = [d](const Vec&) { return std::vector<Mat>(d, Mat::Zero(d, d)); };
  return f;
}

// Conformal frame X_l = s(u) e_l with s(u) = (1 + sign*|u|^2)/2; sign=+1 gives
// the stereographic chart of the unit sphere, sign=-1 the Poincare disk.
inline SmoothField conformal_field(int d, int l, double sign) {
  SmoothField f;
  f.value = [d, l, sign](const Vec& u) {
    Vec v = Vec::Zero(d);
    v[l] = 0.5 * (1.0 + sign * u.squaredNorm());
    return v;
  };
  f.jac = [d, l, sign](const Vec& u) {
    Mat J = Mat::Zero(d, d);
    J.row(l) = sign * u.transpose();
    return J;
  };
  f.hess = [d, l, sign](const Vec&) {
    std::vector<Mat> H(d, Mat::Zero(d, d));
    H[l] = sign * Mat::Identity(d, d);
    return H;
  };
  return f;
}

// The flat bump e^{-1/|x|} (0 at x=0), with first and second derivatives.
inline double flat_bump(double x) { return x == 0.0 ? 0.0 : std::exp(-1.0 / std::abs(x)); }
inline double flat_bump_d1(double x) {
  if (x == 0.0) return 0.0;
  double s = x > 0 ? 1.0 : -1.0;
  return flat_bump(x) * s / (x * x);
}
inline double flat_bump_d2(double x) {
  if (x == 0.0) return 0.0;
  double s = x > 0 ? 1.0 : -1.0;
  return flat_bump(x) * (1.0 / (x * x * x * x) - 2.0 * s / (x * x * x));
}

// Horizontal field (w(x1), 0) on R^2 from scalar w with derivatives.
inline SmoothField horizontal_scalar_field(double (*w)(double), double (*w1)(double),
                                           double (*w2)(double)) {
  SmoothField f;
  f.value = [w](const Vec& x) {
    Vec v(2);
    v << w(x[0]), 0.0;
    return v;
  };
  f.jac = [w1](const Vec& x) {
    Mat J = Mat::Zero(2, 2);
    J(0, 0) = w1(x[0]);
    return J;
  };
  f.hess = [w2](const Vec& x) {
    std::vector<Mat> H(2, Mat::Zero(2, 2));
    H[0](0, 0) = w2(x[0]);
    return H;
  };
  return f;
}

inline double signed_flat_bump(double x) { return x >= 0 ? flat_bump(x) : -flat_bump(x); }
inline double signed_flat_bump_d1(double x) {
  return x == 0.0 ? 0.0 : flat_bump(x) / (x * x);
}
inline double signed_flat_bump_d2(double x) {
  if (x == 0.0) return 0.0;
  double s = x > 0 ? 1.0 : -1.0;
  return flat_bump(x) * (s / (x * x * x * x) - 2.0 / (x * x * x));
}

}  // namespace detail

inline Model make_euclidean(int d) {
  Model mod;
  mod.d = d;
  mod.m = d;
  mod.name = "euclidean" + std::to_string(d);
  mod.riemannian = true;
  mod.chart_note = "global chart, flat metric";
  for (int l = 0; l < d; ++l) {
    Vec e = Vec::Zero(d);
    e[l] = 1.0;
    mod.frame.push_back(detail::constant_field(e));
  }
  return mod;
}

// Unit round sphere in the stereographic chart u in R^2 (projection point at
// the chart's point at infinity). Valid away from that point; paths should
// keep |u| well below ~1e3.
inline Model make_sphere2() {
  Model mod;
  mod.d = 2;
  mod.m = 2;
  mod.name = "sphere2";
  mod.riemannian = true;
  mod.chart_note = "stereographic chart of the unit sphere; antipode of the chart origin is at |u|=inf";
  for (int l = 0; l < 2; ++l) mod.frame.push_back(detail::conformal_field(2, l, +1.0));
  return mod;
}

// Hyperbolic plane (curvature -1) in the Poincare disk chart, valid on |u|<1.
inline Model make_hyperbolic2() {
  Model mod;
  mod.d = 2;
  mod.m = 2;
  mod.name = "hyperbolic2";
  mod.riemannian = true;
  mod.chart_note = "Poincare disk chart, valid on |u| < 1";
  for (int l = 0; l < 2; ++l) mod.frame.push_back(detail::conformal_field(2, l, -1.0));
  return mod;
}

inline Model make_heisenberg() {
  Model mod;
  mod.d = 3;
  mod.m = 2;
  mod.name = "heisenberg";
  mod.chart_note = "global exponential chart";
  SmoothField X1;
  X1.value = [](const Vec& x) {
    Vec v(3);
    v << 1.0, 0.0, -0.5 * x[1];
    return v;
  };
  X1.jac = [](const Vec&) {
    Mat J = Mat::Zero(3, 3);
    J(2, 1) = -0.5;
    return J;
  };
  X1.hess = [](const Vec&) { return std::vector<Mat>(3, Mat::Zero(3, 3)); };
  SmoothField X2;
  X2.value = [](const Vec& x) {
    Vec v(3);
    v << 0.0, 1.0, 0.5 * x[0];
    return v;
  };
  X2.jac = [](const Vec&) {
    Mat J = Mat::Zero(3, 3);
    J(2, 0) = 0.5;
    return J;
  };
  X2.hess = [](const Vec&) { return std::vector<Mat>(3, Mat::Zero(3, 3)); };
  mod.frame = {X1, X2};
  return mod;
}

inline Model make_grushin() {
  Model mod;
  mod.d = 2;
  mod.m = 2;
  mod.name = "grushin";
  mod.chart_note = "global chart; frame rank drops on {x1 = 0}";
  Vec e1(2);
  e1 << 1.0, 0.0;
  mod.frame.push_back(detail::constant_field(e1));
  SmoothField X2;
  X2.value = [](const Vec& x) {
    Vec v(2);
    v << 0.0, x[0];
    return v;
  };
  X2.jac = [](const Vec&) {
    Mat J = Mat::Zero(2, 2);
    J(1, 0) = 1.0;
    return J;
  };
  X2.hess = [](const Vec&) { return std::vector<Mat>(2, Mat::Zero(2, 2)); };
  mod.frame.push_back(X2);
  return mod;
}

// Two frames on R^2 sharing one diffusivity but not equivalent as frames:
// X1 = (x2, 0), X2 = (0, 1), and a third flat-bump field that carries a sign
// flip across {x1 = 0} in the "Y" variant.
inline Model make_sre(bool signed_variant) {
  Model mod;
  mod.d = 2;
  mod.m = 3;
  mod.name = signed_variant ? "sreY" : "sreX";
  mod.chart_note = "global chart; frame rank drops at the origin";
  SmoothField X1;
  X1.value = [](const Vec& x) {
    Vec v(2);
    v << x[1], 0.0;
    return v;
  };
  X1.jac = [](const Vec&) {
    Mat J = Mat::Zero(2, 2);
    J(0, 1) = 1.0;
    return J;
  };
  X1.hess = [](const Vec&) { return std::vector<Mat>(2, Mat::Zero(2, 2)); };
  mod.frame.push_back(X1);
  Vec e2(2);
  e2 << 0.0, 1.0;
  mod.frame.push_back(detail::constant_field(e2));
  if (signed_variant) {
    mod.frame.push_back(detail::horizontal_scalar_field(
        detail::signed_flat_bump, detail::signed_flat_bump_d1, detail::signed_flat_bump_d2));
  } else {
    mod.frame.push_back(detail::horizontal_scalar_field(
        detail::flat_bump, detail::flat_bump_d1, detail::flat_bump_d2));
  }
  return mod;
}

inline Model make_model(const std::string& name) {
  if (name == "euclidean" || name == "euclidean2") return make_euclidean(2);
  if (name == "euclidean1") return make_euclidean(1);
  if (name == "euclidean3") return make_euclidean(3);
  if (name == "euclidean4") return make_euclidean(4);
  if (name == "sphere2") return make_sphere2();
  if (name == "hyperbolic2") return make_hyperbolic2();
  if (name == "heisenberg") return make_heisenberg();
  if (name == "grushin") return make_grushin();
  if (name == "sreX") return make_sre(false);
  if (name == "sreY") return make_sre(true);
  throw ConfigError("unknown model: " + name);
}

}  // namespace subrift
