#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "subrift/shooting.hpp"

namespace subrift {

// Piecewise-linear control path on N uniform intervals, stored as increments.
// The Cameron-Martin inner product is sum_i <dh_i, dk_i> / dt.
struct ControlGrid {
  int N = 0;
  int m = 0;
  Mat incr;  // N x m

  static ControlGrid zero(int N, int m) { return {N, m, Mat::Zero(N, m)}; }
  double dt() const { return 1.0 / N; }
  double norm2() const { return incr.squaredNorm() * N; }
  double norm() const { return std::sqrt(norm2()); }
};

inline double cm_dot(const ControlGrid& a, const ControlGrid& b) {
  return a.incr.cwiseProduct(b.incr).sum() * a.N;
}

// scaled coordinates in which the Cameron-Martin product is Euclidean
inline Vec to_scaled(const ControlGrid& h) {
  Vec c(h.N * h.m);
  double s = std::sqrt(static_cast<double>(h.N));
  for (int i = 0; i < h.N; ++i)
    for (int l = 0; l < h.m; ++l) c[i * h.m + l] = h.incr(i, l) * s;
  return c;
}

inline ControlGrid from_scaled(const Vec& c, int N, int m) {
  ControlGrid h = ControlGrid::zero(N, m);
  double s = std::sqrt(static_cast<double>(N));
  for (int i = 0; i < N; ++i)
    for (int l = 0; l < m; ++l) h.incr(i, l) = c[i * m + l] / s;
  return h;
}

// Integrates phi' = sum_l X_l(phi) hdot^l with RK4, `substeps` steps per
// control interval. Returns the state at the N+1 control nodes.
inline std::vector<Vec> endpoint_map(const Model& model, const Vec& x, const ControlGrid& h,
                                     int substeps = 8, double escape_bound = 1e6) {
  int N = h.N;
  double hh = h.dt() / substeps;
  std::vector<Vec> nodes;
  nodes.reserve(N + 1);
  nodes.push_back(x);
  Vec phi = x;
  for (int i = 0; i < N; ++i) {
    Vec rate = h.incr.row(i).transpose() * static_cast<double>(N);
    auto f = [&](const Vec& y) {
      Vec dy = Vec::Zero(model.d);
      for (int l = 0; l < model.m; ++l) dy += model.frame[l].value(y) * rate[l];
      return dy;
    };
    for (int s = 0; s < substeps; ++s) {
      Vec k1 = f(phi);
      Vec k2 = f(phi + 0.5 * hh * k1);
      Vec k3 = f(phi + 0.5 * hh * k2);
      Vec k4 = f(phi + hh * k3);
      phi += (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!all_finite(phi)) throw NonFiniteError("endpoint_map: non-finite state");
      if (phi.cwiseAbs().maxCoeff() > escape_bound)
        throw FlowEscapeError("endpoint_map: state escaped bound");
    }
    nodes.push_back(phi);
  }
  return nodes;
}

// First variation path of the endpoint map in direction k, integrated
// jointly with the base path (shared RK4 stages). Returns v at the nodes.
inline std::vector<Vec> endpoint_derivative(const Model& model, const Vec& x,
                                            const ControlGrid& h, const ControlGrid& k,
                                            int substeps = 8) {
  int N = h.N;
  double hh = h.dt() / substeps;
  std::vector<Vec> nodes;
  nodes.reserve(N + 1);
  Vec phi = x;
  Vec v = Vec::Zero(model.d);
  nodes.push_back(v);
  for (int i = 0; i < N; ++i) {
    Vec rate = h.incr.row(i).transpose() * static_cast<double>(N);
    Vec krate = k.incr.row(i).transpose() * static_cast<double>(N);
    auto f = [&](const Vec& y, const Vec& w, Vec& dy, Vec& dw) {
      dy = Vec::Zero(model.d);
      dw = Vec::Zero(model.d);
      for (int l = 0; l < model.m; ++l) {
        Vec X = model.frame[l].value(y);
        Mat J = model.frame[l].jac(y);
        dy += X * rate[l];
        dw += (J * w) * rate[l] + X * krate[l];
      }
    };
    for (int s = 0; s < substeps; ++s) {
      Vec a1, b1, a2, b2, a3, b3, a4, b4;
      f(phi, v, a1, b1);
      f(phi + 0.5 * hh * a1, v + 0.5 * hh * b1, a2, b2);
      f(phi + 0.5 * hh * a2, v + 0.5 * hh * b2, a3, b3);
      f(phi + hh * a3, v + hh * b3, a4, b4);
      phi += (hh / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
      v += (hh / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    if (!all_finite(v)) throw LinearizationError("endpoint_derivative: non-finite variation");
    nodes.push_back(v);
  }
  return nodes;
}

// Eigenstructure of the second variation restricted to the kernel of the
// endpoint derivative, in the Cameron-Martin geometry.
struct QSpectrum {
  Mat kernel_basis;  // (N m) x dim, orthonormal columns in scaled coordinates
  Vec mu;            // eigenvalues of q on the kernel, ascending
  Vec lambda1;       // endpoint covector (KKT multiplier of the discrete minimum)
  int rank = 0;      // rank of the endpoint derivative

  int dim() const { return static_cast<int>(kernel_basis.cols()); }
};

struct HeatConstant {
  double detC1bar = 0.0;
  Vec Z1;
  double lambda1_dot_Z1 = 0.0;
  double spectral_factor = 0.0;
  double c = 0.0;
  Vec mu;
};

// Workspace around one geodesic solution: the control is discretized on N
// intervals and refined by constrained Gauss-Newton to the exact minimum of
// the discrete energy subject to the discrete endpoint constraint. All
// second-variation quantities are evaluated at that discrete minimizer.
class SecondVar {
 public:
  SecondVar(const Model& model, const GeodesicSolution& sol, int N, int substeps = 8)
      : model_(model), x_(sol.lambda0.x), y_(sol.path.x.back()), N_(N), substeps_(substeps) {
    h_ = discretize_control(model, sol, N);
    refine();
    build_pcheck();
  }

  const ControlGrid& control() const { return h_; }
  const Vec& lambda1() const { return lambda1_; }
  const Vec& endpoint() const { return endpoint_; }
  int fine_steps() const { return N_ * substeps_; }
  const std::vector<Vec>& fine_path() const { return phi_fine_; }
  const std::vector<Mat>& fine_u() const { return u_fine_; }
  const Mat& dphi1() const { return dphi1_; }

  double first_variation(const ControlGrid& k) const { return 2.0 * cm_dot(h_, k); }

  ControlGrid kernel_control(const Vec& coeffs) const {
    const QSpectrum& s = spectrum();
    return from_scaled(s.kernel_basis * coeffs, N_, model_.m);
  }

  // kernel-membership defect |dphi1 k| relative to the operator scale
  double kernel_residual(const ControlGrid& k) const {
    Vec img = dphi1_scaled_ * to_scaled(k);
    double scale = dphi1_scaled_.norm() * to_scaled(k).norm() + 1e-300;
    return img.norm() / scale;
  }

  // Second derivative of the endpoint map, exact for the discrete
  // integrator: joint RK4 of (phi, v, v', w) with shared stages.
  Vec second_endpoint_derivative(const ControlGrid& k, const ControlGrid& kp) const {
    int d = model_.d;
    double hh = h_.dt() / substeps_;
    Vec phi = x_;
    Vec v = Vec::Zero(d), vp = Vec::Zero(d), w = Vec::Zero(d);
    for (int i = 0; i < N_; ++i) {
      Vec rate = h_.incr.row(i).transpose() * static_cast<double>(N_);
      Vec kr = k.incr.row(i).transpose() * static_cast<double>(N_);
      Vec kpr = kp.incr.row(i).transpose() * static_cast<double>(N_);
      auto f = [&](const Vec& y, const Vec& a, const Vec& b, const Vec& c, Vec& dy, Vec& da,
                   Vec& db, Vec& dc) {
        dy = Vec::Zero(d);
        da = Vec::Zero(d);
        db = Vec::Zero(d);
        dc = Vec::Zero(d);
        for (int l = 0; l < model_.m; ++l) {
          FieldEval fe = model_.frame[l].eval(y);
          dy += fe.value * rate[l];
          da += (fe.jac * a) * rate[l] + fe.value * kr[l];
          db += (fe.jac * b) * rate[l] + fe.value * kpr[l];
          Vec hab(d);
          for (int comp = 0; comp < d; ++comp) hab[comp] = a.dot(fe.hess[comp] * b);
          dc += (fe.jac * c + hab) * rate[l] + (fe.jac * a) * kpr[l] + (fe.jac * b) * kr[l];
        }
      };
      for (int s = 0; s < substeps_; ++s) {
        Vec dy1(d), da1(d), db1(d), dc1(d), dy2(d), da2(d), db2(d), dc2(d);
        Vec dy3(d), da3(d), db3(d), dc3(d), dy4(d), da4(d), db4(d), dc4(d);
        f(phi, v, vp, w, dy1, da1, db1, dc1);
        f(phi + 0.5 * hh * dy1, v + 0.5 * hh * da1, vp + 0.5 * hh * db1, w + 0.5 * hh * dc1,
          dy2, da2, db2, dc2);
        f(phi + 0.5 * hh * dy2, v + 0.5 * hh * da2, vp + 0.5 * hh * db2, w + 0.5 * hh * dc2,
          dy3, da3, db3, dc3);
        f(phi + hh * dy3, v + hh * da3, vp + hh * db3, w + hh * dc3, dy4, da4, db4, dc4);
        phi += (hh / 6.0) * (dy1 + 2 * dy2 + 2 * dy3 + dy4);
        v += (hh / 6.0) * (da1 + 2 * da2 + 2 * da3 + da4);
        vp += (hh / 6.0) * (db1 + 2 * db2 + 2 * db3 + db4);
        w += (hh / 6.0) * (dc1 + 2 * dc2 + 2 * dc3 + dc4);
      }
    }
    return w;
  }

  // q(k, k') = <k,k'>_CM - <lambda1, d2 phi1(k,k')>, defined on the kernel
  double q_form(const ControlGrid& k, const ControlGrid& kp, bool check_kernel = true) const {
    if (check_kernel) {
      if (kernel_residual(k) > 1e-8 || kernel_residual(kp) > 1e-8)
        throw ConfigError("q_form: input not in the kernel of the endpoint derivative");
    }
    Vec w1 = second_endpoint_derivative(k, kp);
    return cm_dot(k, kp) - lambda1_.dot(w1);
  }

  // variation path for k at the fine grid, from the stored tableau
  std::vector<Vec> variation_path_fine(const ControlGrid& k) const {
    Vec raw = Vec(k.incr.size());
    for (int i = 0; i < N_; ++i)
      for (int l = 0; l < model_.m; ++l) raw[i * model_.m + l] = k.incr(i, l);
    int F = fine_steps();
    std::vector<Vec> v(F + 1);
    for (int t = 0; t <= F; ++t) v[t] = V_fine_[t] * raw;
    return v;
  }

  const QSpectrum& spectrum() const {
    if (!spectrum_) compute_spectrum();
    return *spectrum_;
  }

  // momentum of the discrete stationary path at t = 0 (the refined control
  // is the projection of the bicharacteristic with this initial covector)
  Vec initial_momentum() const { return pcheck_.front(); }

  // Least-squares control for a prescribed variation path given at the N+1
  // control nodes: minimizes the Cameron-Martin norm among controls whose
  // tableau path matches v at the nodes (least-squares when m < d).
  ControlGrid reconstruct_control(const std::vector<Vec>& v_nodes) const {
    int d = model_.d, M = N_ * model_.m;
    double sqn = std::sqrt(static_cast<double>(N_));
    Mat A((N_ + 1) * d, M);
    Vec b((N_ + 1) * d);
    for (int j = 0; j <= N_; ++j) {
      A.middleRows(j * d, d) = V_fine_[j * substeps_] / sqn;
      b.segment(j * d, d) = v_nodes[j];
    }
    Eigen::BDCSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vec c = svd.solve(b);
    return from_scaled(c, N_, model_.m);
  }

  // orthogonal projection onto the kernel of the endpoint derivative
  ControlGrid project_kernel(const ControlGrid& k) const {
    const QSpectrum& s = spectrum();
    Vec c = to_scaled(k);
    Vec proj = s.kernel_basis * (s.kernel_basis.transpose() * c);
    return from_scaled(proj, N_, model_.m);
  }

  HeatConstant heat_constant(const JacobiData& jd, const BicharPath& path) const {
    const QSpectrum& s = spectrum();
    HeatConstant hc;
    hc.mu = s.mu;
    if (s.mu.minCoeff() <= 0.0)
      throw CutLocusError("heat_constant: second variation not positive-definite");
    int d = model_.d;
    hc.detC1bar = jd.C1bar.determinant();
    // Z1 = int u_1 u_t^-1 b(gamma_t) dt with b the Ito-form drift
    int Nf = path.steps();
    double dt = path.T / Nf;
    Vec z = Vec::Zero(d);
    for (int i = 0; i <= Nf; ++i) {
      Vec term = jd.u[Nf] * jd.u[i].partialPivLu().solve(ito_drift(model_, path.x[i]));
      z += ((i == 0 || i == Nf) ? 0.5 : 1.0) * term;
    }
    hc.Z1 = z * dt;
    hc.lambda1_dot_Z1 = jd.lambda1.dot(hc.Z1);
    double logprod = 0.0;
    for (int n = 0; n < s.mu.size(); ++n) logprod += std::log(s.mu[n]);
    hc.spectral_factor = std::exp(-0.5 * logprod);
    hc.c = std::pow(2.0 * M_PI, -0.5 * d) / std::sqrt(hc.detC1bar) *
           std::exp(0.5 * hc.lambda1_dot_Z1) * hc.spectral_factor;
    return hc;
  }

  // control increments of the solved bicharacteristic, integrated per
  // interval from the stored fine path
  static ControlGrid discretize_control(const Model& model, const GeodesicSolution& sol, int N) {
    ControlGrid h = ControlGrid::zero(N, model.m);
    int q = 8;  // quadrature nodes per interval
    for (int i = 0; i < N; ++i) {
      for (int l = 0; l < model.m; ++l) {
        double acc = 0.0;
        for (int s = 0; s <= q; ++s) {
          double t = (i + static_cast<double>(s) / q) / N;
          Vec x = sol.path.interp_x(t);
          Vec p = sol.path.interp_p(t);
          double rate = p.dot(model.frame[l].value(x));
          acc += (s == 0 || s == q) ? 0.5 * rate : rate;
        }
        h.incr(i, l) = acc / (q * N);
      }
    }
    return h;
  }

 private:
  // joint integration of base path, frame transport and the full variation
  // tableau; shared stages make V1 the exact derivative of the discrete
  // endpoint map
  void integrate_tableau(const ControlGrid& h, std::vector<Vec>* phi_out,
                         std::vector<Mat>* u_out, std::vector<Mat>* V_out) const {
    int d = model_.d, m = model_.m, M = N_ * m;
    double hh = h.dt() / substeps_;
    Vec phi = x_;
    Mat u = Mat::Identity(d, d);
    Mat V = Mat::Zero(d, M);
    if (phi_out) phi_out->assign(1, phi);
    if (u_out) u_out->assign(1, u);
    if (V_out) V_out->assign(1, V);
    for (int i = 0; i < N_; ++i) {
      Vec rate = h.incr.row(i).transpose() * static_cast<double>(N_);
      auto f = [&](const Vec& y, const Mat& uu, const Mat& VV, Vec& dy, Mat& du, Mat& dV) {
        int dd = d;
        dy = Vec::Zero(dd);
        Mat B = Mat::Zero(dd, dd);
        Mat Xmat(dd, m);
        for (int l = 0; l < m; ++l) {
          Vec X = model_.frame[l].value(y);
          Mat J = model_.frame[l].jac(y);
          Xmat.col(l) = X;
          dy += X * rate[l];
          B += J * rate[l];
        }
        du = B * uu;
        dV = B * VV;
        dV.block(0, i * m, dd, m) += Xmat * static_cast<double>(N_);
      };
      for (int s = 0; s < substeps_; ++s) {
        Vec dy1(d), dy2(d), dy3(d), dy4(d);
        Mat du1, du2, du3, du4, dV1, dV2, dV3, dV4;
        f(phi, u, V, dy1, du1, dV1);
        f(phi + 0.5 * hh * dy1, u + 0.5 * hh * du1, V + 0.5 * hh * dV1, dy2, du2, dV2);
        f(phi + 0.5 * hh * dy2, u + 0.5 * hh * du2, V + 0.5 * hh * dV2, dy3, du3, dV3);
        f(phi + hh * dy3, u + hh * du3, V + hh * dV3, dy4, du4, dV4);
        phi += (hh / 6.0) * (dy1 + 2 * dy2 + 2 * dy3 + dy4);
        u += (hh / 6.0) * (du1 + 2 * du2 + 2 * du3 + du4);
        V += (hh / 6.0) * (dV1 + 2 * dV2 + 2 * dV3 + dV4);
        if (!all_finite(phi)) throw NonFiniteError("secondvar: base path lost finiteness");
        if (phi_out) phi_out->push_back(phi);
        if (u_out) u_out->push_back(u);
        if (V_out) V_out->push_back(V);
      }
    }
  }

  struct RefineEval {
    Vec r;
    double res = 0.0;
    double stat = 0.0;
    Vec lambda;
    Mat A;
  };

  // (re)integrates the tableau at the stored control and evaluates the KKT
  // residuals; throws RankDeficiencyError on non-regular paths
  RefineEval refine_eval(const Vec& c) {
    double sqn = std::sqrt(static_cast<double>(N_));
    integrate_tableau(h_, &phi_fine_, &u_fine_, &V_fine_);
    endpoint_ = phi_fine_.back();
    dphi1_ = V_fine_.back();
    dphi1_scaled_ = dphi1_ / sqn;
    Eigen::JacobiSVD<Mat> svd(dphi1_scaled_);
    double smax = svd.singularValues().maxCoeff();
    if (svd.singularValues().minCoeff() <= 1e-10 * smax)
      throw RankDeficiencyError(
          "secondvar: endpoint derivative is rank-deficient (non-regular path)");
    RefineEval ev;
    ev.r = y_ - endpoint_;
    ev.res = ev.r.norm();
    ev.A = dphi1_scaled_ * dphi1_scaled_.transpose();
    ev.lambda = ev.A.ldlt().solve(dphi1_scaled_ * c);
    ev.stat = (dphi1_scaled_.transpose() * ev.lambda - c).norm();
    return ev;
  }

  // Minimizes the Cameron-Martin norm of h subject to the discrete endpoint
  // constraint. Two projection sweeps bring the iterate into the Newton
  // basin; Levenberg-damped Newton steps on the KKT system then converge
  // even when the second variation has a soft mode (near-conjugate pairs,
  // where plain alternating projection contracts only like 1 - mu_min and
  // an undamped Newton step can overshoot along the flat valley).
  void refine() {
    int d = model_.d, m = model_.m, M = N_ * m;
    Vec c = to_scaled(h_);
    RefineEval ev = refine_eval(c);
    double beta = 0.0;
    for (int it = 0; it < 200; ++it) {
#ifdef SUBRIFT_REFINE_TRACE
      std::fprintf(stderr, "refine it=%d res=%.3e stat=%.3e beta=%.1e\n", it, ev.res, ev.stat,
                   beta);
#endif
      if (ev.res <= 1e-11 * (1.0 + y_.norm()) && ev.stat <= 1e-9 * (1.0 + c.norm())) {
        lambda1_ = ev.lambda;
        converged_ = true;
        return;
      }
      bool advanced = false;
      if (it < 2) {
        Vec nu = ev.A.ldlt().solve(ev.r + dphi1_scaled_ * c);
        c = dphi1_scaled_.transpose() * nu;
        h_ = from_scaled(c, N_, m);
        ev = refine_eval(c);
        advanced = true;
      } else {
        Mat S = assemble_second_matrix(Mat::Identity(M, M), transported_covector(ev.lambda));
        // trial evaluations overwrite the member tableau, so the proposal
        // uses a captured copy of the current Jacobian
        Mat Jc = dphi1_scaled_;
        double merit = ev.res + ev.stat;
        for (int rejects = 0; rejects < 12; ++rejects) {
          Mat KKT = Mat::Zero(M + d, M + d);
          KKT.topLeftCorner(M, M) = (1.0 + beta) * Mat::Identity(M, M) - S;
          KKT.topRightCorner(M, d) = -Jc.transpose();
          KKT.bottomLeftCorner(d, M) = Jc;
          Vec rhs(M + d);
          rhs.head(M) = Jc.transpose() * ev.lambda - c;
          rhs.tail(d) = ev.r;
          Vec delta = KKT.partialPivLu().solve(rhs);
          Vec trial = c + delta.head(M);
          ControlGrid h_save = h_;
          h_ = from_scaled(trial, N_, m);
          bool ok = true;
          RefineEval trial_ev;
          try {
            trial_ev = refine_eval(trial);
          } catch (const RankDeficiencyError&) {
            throw;
          } catch (const SubriftError&) {
            ok = false;
          }
          if (ok && trial_ev.res + trial_ev.stat < merit) {
            c = trial;
            ev = trial_ev;
            beta = beta / 10.0;
            if (beta < 1e-10) beta = 0.0;
            advanced = true;
            break;
          }
          h_ = h_save;
          beta = std::max(10.0 * beta, 1e-5);
        }
        if (advanced) continue;
      }
      if (!advanced && it >= 2) break;
    }
    if (!converged_)
      throw NoConvergenceError("secondvar: discrete control refinement did not converge");
  }

  // endpoint covector transported along the path: p_t = (u_t^-T)(u_1^T lam)
  std::vector<Vec> transported_covector(const Vec& lam) const {
    int F = fine_steps();
    std::vector<Vec> p(F + 1);
    Vec w = u_fine_[F].transpose() * lam;
    for (int t = 0; t <= F; ++t)
      p[t] = u_fine_[t].transpose().partialPivLu().solve(w);
    return p;
  }

  void build_pcheck() { pcheck_ = transported_covector(lambda1_); }

  // S(a,b) = <lambda, d2 phi1(k_a, k_b)> for the controls given by the
  // columns of `basis` (scaled coordinates), by trapezoid quadrature of the
  // variation-of-constants form along the base path.
  Mat assemble_second_matrix(const Mat& basis, const std::vector<Vec>& pgrid) const {
    int d = model_.d, m = model_.m, M = N_ * m, F = fine_steps();
    int K = static_cast<int>(basis.cols());
    double hf = 1.0 / F;
    double sqn = std::sqrt(static_cast<double>(N_));

    std::vector<Mat> W(F + 1), G(F + 1);
    for (int t = 0; t <= F; ++t) {
      const Vec& y = phi_fine_[t];
      int interval = std::min(t / substeps_, N_ - 1);
      Vec rate = h_.incr.row(interval).transpose() * static_cast<double>(N_);
      Mat Wt = Mat::Zero(d, d);
      Mat Gt(m, d);
      for (int l = 0; l < m; ++l) {
        FieldEval fe = model_.frame[l].eval(y);
        Mat ph = Mat::Zero(d, d);
        for (int comp = 0; comp < d; ++comp) ph += pgrid[t][comp] * fe.hess[comp];
        Wt += rate[l] * ph;
        Gt.row(l) = (fe.jac.transpose() * pgrid[t]).transpose();
      }
      W[t] = Wt;
      G[t] = Gt;
    }

    std::vector<Mat> va(K), wva(K), gva(K);
    Mat T = Mat::Zero(K, M);
    for (int a = 0; a < K; ++a) {
      Vec raw = basis.col(a) / sqn;
      va[a].resize(F + 1, d);
      wva[a].resize(F + 1, d);
      gva[a].resize(F + 1, m);
      for (int t = 0; t <= F; ++t) {
        Vec v = V_fine_[t] * raw;
        va[a].row(t) = v.transpose();
        wva[a].row(t) = (W[t] * v).transpose();
        gva[a].row(t) = (G[t] * v).transpose();
      }
      for (int i = 0; i < N_; ++i) {
        for (int l = 0; l < m; ++l) {
          double acc = 0.0;
          for (int s = 0; s <= substeps_; ++s) {
            int t = i * substeps_ + s;
            acc += ((s == 0 || s == substeps_) ? 0.5 : 1.0) * gva[a](t, l);
          }
          T(a, i * m + l) = acc * hf;
        }
      }
    }

    Mat S(K, K);
    for (int a = 0; a < K; ++a) {
      for (int b = a; b < K; ++b) {
        double acc = 0.0;
        for (int t = 0; t <= F; ++t) {
          double wgt = (t == 0 || t == F) ? 0.5 : 1.0;
          acc += wgt * va[a].row(t).dot(wva[b].row(t));
        }
        double m1 = acc * hf;
        double m2 = sqn * T.row(a).dot(basis.col(b));
        double m3 = sqn * T.row(b).dot(basis.col(a));
        S(a, b) = m1 + m2 + m3;
        S(b, a) = S(a, b);
      }
    }
    return S;
  }

  void compute_spectrum() const {
    int d = model_.d, M = N_ * model_.m;
    Eigen::JacobiSVD<Mat> svd(dphi1_scaled_, Eigen::ComputeFullV);
    int rank = 0;
    double smax = svd.singularValues().maxCoeff();
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > 1e-10 * smax) ++rank;
    if (rank < d)
      throw RankDeficiencyError("q_spectrum: endpoint derivative rank below dimension");
    Mat basis = svd.matrixV().rightCols(M - rank);
    int K = static_cast<int>(basis.cols());

    Mat S = assemble_second_matrix(basis, pcheck_);
    Mat qmat = Mat::Identity(K, K) - S;
    Eigen::SelfAdjointEigenSolver<Mat> es(qmat);

    QSpectrum spec;
    spec.kernel_basis = basis * es.eigenvectors();
    spec.mu = es.eigenvalues();
    spec.lambda1 = lambda1_;
    spec.rank = rank;
    spectrum_ = std::move(spec);
  }

  Model model_;  // owned copy: the workspace outlives any caller temporary
  Vec x_, y_;
  int N_, substeps_;
  ControlGrid h_;
  std::vector<Vec> phi_fine_;
  std::vector<Mat> u_fine_;
  std::vector<Mat> V_fine_;
  std::vector<Vec> pcheck_;  // transported endpoint covector along the path
  Mat dphi1_, dphi1_scaled_;
  Vec endpoint_;
  Vec lambda1_;
  bool converged_ = false;
  mutable std::optional<QSpectrum> spectrum_;
};

// Kernel scaffold: orthonormal basis of ker(dphi1) in the Cameron-Martin
// geometry plus the rank of the derivative.
inline QSpectrum kernel_basis(const SecondVar& sv) { return sv.spectrum(); }

inline QSpectrum q_spectrum(const SecondVar& sv) { return sv.spectrum(); }

inline HeatConstant heat_constant(const Model& model, const GeodesicSolution& sol, int N,
                                  int substeps = 8) {
  SecondVar sv(model, sol, N, substeps);
  return sv.heat_constant(sol.jacobi, sol.path);
}

}  // namespace subrift
