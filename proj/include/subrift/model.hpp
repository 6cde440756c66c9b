#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "subrift/core.hpp"
#include "subrift/dual.hpp"

namespace subrift {

// One evaluation of a vector field: value, Jacobian and Hessian at a point.
// jac(i,j)   = dX^i/dx^j
// hess[c](i,j) = d^2 X^c / dx^i dx^j   (symmetric in i,j)
struct FieldEval {
  Vec value;
  Mat jac;
  std::vector<Mat> hess;
};

// A smooth vector field on the chart R^d, evaluable with exact first and
// second derivatives.
struct SmoothField {
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jac;
  std::function<std::vector<Mat>(const Vec&)> hess;

  FieldEval eval(const Vec& x) const { return {value(x), jac(x), hess(x)}; }
};

// Sub-Riemannian model on a single chart R^d: a frame of m smooth vector
// fields (the diffusivity is the sum of their squares) plus an optional
// drift field.
struct Model {
  int d = 0;
  int m = 0;
  std::string name;
  std::vector<SmoothField> frame;
  std::optional<SmoothField> drift;
  bool riemannian = false;  // a(x) positive-definite on the chart
  std::string chart_note;   // documented validity domain of the chart
};

namespace detail {

template <class F, class S>
std::vector<S> call_field(const F& f, const std::vector<S>& x) {
  return f(x);
}

}  // namespace detail

// Builds a SmoothField from a value-only generic functor
//   template <class S> std::vector<S> f(const std::vector<S>& x)
// using nested dual numbers for the Jacobian and Hessian.
template <class F>
SmoothField field_from_value(F f, int d) {
  SmoothField sf;
  sf.value = [f, d](const Vec& x) {
    std::vector<double> xs(x.data(), x.data() + d);
    auto y = detail::call_field(f, xs);
    Vec out(d);
    for (int i = 0; i < d; ++i) out[i] = y[i];
    return out;
  };
  sf.jac = [f, d](const Vec& x) {
    Mat J(d, d);
    for (int j = 0; j < d; ++j) {
      std::vector<Dual1> xs(d);
      for (int i = 0; i < d; ++i) xs[i] = Dual1(x[i], i == j ? 1.0 : 0.0);
      auto y = detail::call_field(f, xs);
      for (int i = 0; i < d; ++i) J(i, j) = y[i].d;
    }
    return J;
  };
  sf.hess = [f, d](const Vec& x) {
    std::vector<Mat> H(d, Mat::Zero(d, d));
    for (int j = 0; j < d; ++j) {
      for (int k = j; k < d; ++k) {
        std::vector<Dual2> xs(d);
        for (int i = 0; i < d; ++i) {
          double dj = (i == j) ? 1.0 : 0.0;
          double dk = (i == k) ? 1.0 : 0.0;
          xs[i] = Dual2(Dual1(x[i], dj), Dual1(dk, 0.0));
        }
        auto y = detail::call_field(f, xs);
        for (int c = 0; c < d; ++c) {
          H[c](j, k) = y[c].d.d;
          H[c](k, j) = y[c].d.d;
        }
      }
    }
    return H;
  };
  return sf;
}

// Evaluates all frame fields at x, checking finiteness and Hessian symmetry.
inline std::vector<FieldEval> eval_frame(const Model& model, const Vec& x) {
  if (!all_finite(x)) throw NonFiniteError("eval_frame: non-finite point");
  std::vector<FieldEval> out;
  out.reserve(model.m);
  for (int l = 0; l < model.m; ++l) {
    FieldEval fe = model.frame[l].eval(x);
    if (!all_finite(fe.value) || !all_finite(fe.jac))
      throw ModelEvaluationError(
          "eval_frame: non-finite output in field " + std::to_string(l), l);
    for (int c = 0; c < model.d; ++c) {
      if (!all_finite(fe.hess[c]))
        throw ModelEvaluationError(
            "eval_frame: non-finite Hessian in field " + std::to_string(l), l);
      double asym = (fe.hess[c] - fe.hess[c].transpose()).cwiseAbs().maxCoeff();
      if (asym > 1e-12 * (1.0 + fe.hess[c].cwiseAbs().maxCoeff()))
        throw ModelEvaluationError(
            "eval_frame: asymmetric Hessian in field " + std::to_string(l), l);
    }
    out.push_back(std::move(fe));
  }
  return out;
}

// a(x) = sum_l X_l X_l^T, the diffusivity.
inline Mat diffusivity(const Model& model, const Vec& x) {
  Mat a = Mat::Zero(model.d, model.d);
  for (int l = 0; l < model.m; ++l) {
    Vec X = model.frame[l].value(x);
    a.noalias() += X * X.transpose();
  }
  return a;
}

// d a_{ij} / dx_k, assembled from frame values and Jacobians.
inline std::vector<Mat> diffusivity_derivative(const Model& model, const Vec& x) {
  std::vector<Mat> da(model.d, Mat::Zero(model.d, model.d));
  for (int l = 0; l < model.m; ++l) {
    Vec X = model.frame[l].value(x);
    Mat J = model.frame[l].jac(x);
    for (int k = 0; k < model.d; ++k) {
      Vec dX = J.col(k);
      da[k].noalias() += dX * X.transpose() + X * dX.transpose();
    }
  }
  return da;
}

// d^2 a_{ij} / dx_k dx_r; hess-of-a[k][r] is the d x d matrix in (i,j).
inline std::vector<std::vector<Mat>> diffusivity_second_derivative(
    const Model& model, const Vec& x) {
  int d = model.d;
  std::vector<std::vector<Mat>> dda(d, std::vector<Mat>(d, Mat::Zero(d, d)));
  for (int l = 0; l < model.m; ++l) {
    Vec X = model.frame[l].value(x);
    Mat J = model.frame[l].jac(x);
    std::vector<Mat> H = model.frame[l].hess(x);
    for (int k = 0; k < d; ++k) {
      for (int r = 0; r < d; ++r) {
        Vec ddX(d);
        for (int c = 0; c < d; ++c) ddX[c] = H[c](k, r);
        dda[k][r].noalias() += ddX * X.transpose() + X * ddX.transpose() +
                               J.col(k) * J.col(r).transpose() +
                               J.col(r) * J.col(k).transpose();
      }
    }
  }
  return dda;
}

// Ito-form drift: X0 + (1/2) sum_l (grad X_l) X_l, the effective first-order
// coefficient of the generator written on frame fields.
inline Vec ito_drift(const Model& model, const Vec& x) {
  Vec b = Vec::Zero(model.d);
  if (model.drift) b = model.drift->value(x);
  for (int l = 0; l < model.m; ++l) {
    Vec X = model.frame[l].value(x);
    Mat J = model.frame[l].jac(x);
    b.noalias() += 0.5 * (J * X);
  }
  return b;
}

}  // namespace subrift
