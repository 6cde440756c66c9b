#pragma once

#include <vector>

#include "subrift/hamflow.hpp"
#include "subrift/model.hpp"

namespace subrift {

// Riemannian geometry of the chart metric g = a^-1, for models whose
// diffusivity is positive-definite. Christoffel symbols and curvature are
// assembled from the exact first and second derivatives of a.

inline Mat metric(const Model& model, const Vec& x) {
  Mat a = diffusivity(model, x);
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw NotRiemannianError("metric: diffusivity not positive-definite at this point");
  return a.inverse();
}

// Gamma[i](j,k) = Gamma^i_{jk}
inline std::vector<Mat> christoffel(const Model& model, const Vec& x) {
  int d = model.d;
  Mat a = diffusivity(model, x);
  Mat g = metric(model, x);
  std::vector<Mat> da = diffusivity_derivative(model, x);
  // dg_k = -g da_k g
  std::vector<Mat> dg(d);
  for (int k = 0; k < d; ++k) dg[k] = -g * da[k] * g;
  std::vector<Mat> G(d, Mat::Zero(d, d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        double s = 0.0;
        for (int l = 0; l < d; ++l)
          s += a(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
        G[i](j, k) = 0.5 * s;
      }
  return G;
}

// dGamma[r][i](j,k) = d_r Gamma^i_{jk}
inline std::vector<std::vector<Mat>> christoffel_derivative(const Model& model, const Vec& x) {
  int d = model.d;
  Mat a = diffusivity(model, x);
  Mat g = metric(model, x);
  std::vector<Mat> da = diffusivity_derivative(model, x);
  auto dda = diffusivity_second_derivative(model, x);
  std::vector<Mat> dg(d), dainv = da;
  for (int k = 0; k < d; ++k) dg[k] = -g * da[k] * g;
  // second derivative of g: d_r d_k g = -g (d_r a) g (d_k a) g - g (d_rk a) g
  //                                     - g (d_k a) g (d_r a) g  ... via product rule
  std::vector<std::vector<Mat>> ddg(d, std::vector<Mat>(d));
  for (int k = 0; k < d; ++k)
    for (int r = 0; r < d; ++r)
      ddg[k][r] = -(dg[r] * da[k] * g + g * dda[k][r] * g + g * da[k] * dg[r]);
  std::vector<std::vector<Mat>> dG(d, std::vector<Mat>(d, Mat::Zero(d, d)));
  for (int r = 0; r < d; ++r)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
          double s = 0.0;
          for (int l = 0; l < d; ++l) {
            s += da[r](i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
            s += a(i, l) * (ddg[j][r](l, k) + ddg[k][r](l, j) - ddg[l][r](j, k));
          }
          dG[r][i](j, k) = 0.5 * s;
        }
  return dG;
}

// matrix of the linear map w -> Gamma(v) w, [Gamma(v)]^i_j = Gamma^i_{jk} v^k
inline Mat christoffel_apply(const std::vector<Mat>& G, const Vec& v) {
  int d = static_cast<int>(G.size());
  Mat M(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) M(i, j) = G[i].row(j).dot(v);
  return M;
}

// curvature operator R_v w = R(w, v) v as a d x d matrix:
// (R_v)^i_k = R^i_{jkl} v^j v^l with
// R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj}
//             + Gamma^i_{km} Gamma^m_{lj} - Gamma^i_{lm} Gamma^m_{kj}
inline Mat curvature_operator(const Model& model, const Vec& x, const Vec& v) {
  int d = model.d;
  auto G = christoffel(model, x);
  auto dG = christoffel_derivative(model, x);
  Mat R = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int j = 0; j < d; ++j)
        for (int l = 0; l < d; ++l) {
          double r = dG[k][i](l, j) - dG[l][i](k, j);
          for (int mm = 0; mm < d; ++mm)
            r += G[i](k, mm) * G[mm](l, j) - G[i](l, mm) * G[mm](k, j);
          s += r * v[j] * v[l];
        }
      R(i, k) = s;
    }
  return R;
}

// finite-difference Christoffel symbols from the chart metric, retained as a
// cross-check on the assembled derivatives
inline std::vector<Mat> christoffel_fd(const Model& model, const Vec& x, double step = 1e-4) {
  int d = model.d;
  Mat a = diffusivity(model, x);
  std::vector<Mat> dg(d);
  for (int k = 0; k < d; ++k) {
    Vec xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    dg[k] = (metric(model, xp) - metric(model, xm)) / (2.0 * step);
  }
  std::vector<Mat> G(d, Mat::Zero(d, d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        double s = 0.0;
        for (int l = 0; l < d; ++l)
          s += a(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
        G[i](j, k) = 0.5 * s;
      }
  return G;
}

// Parallel transport matrices along a bicharacteristic: tau_0 = I and
// tau' = -Gamma(xdot) tau, integrated with RK4 on the path grid.
inline std::vector<Mat> parallel_transport(const Model& model, const BicharPath& path) {
  int N = path.steps();
  int d = model.d;
  double h = path.T / N;
  std::vector<Mat> tau(N + 1);
  tau[0] = Mat::Identity(d, d);
  auto rhs = [&](double t, const Mat& T) {
    Vec x = path.interp_x(t);
    Vec p = path.interp_p(t);
    Vec xdot = diffusivity(model, x) * p;
    return Mat(-christoffel_apply(christoffel(model, x), xdot) * T);
  };
  for (int i = 0; i < N; ++i) {
    double t = path.time(i);
    Mat k1 = rhs(t, tau[i]);
    Mat k2 = rhs(t + 0.5 * h, tau[i] + 0.5 * h * k1);
    Mat k3 = rhs(t + 0.5 * h, tau[i] + 0.5 * h * k2);
    Mat k4 = rhs(t + h, tau[i] + h * k3);
    tau[i + 1] = tau[i] + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return tau;
}

}  // namespace subrift
