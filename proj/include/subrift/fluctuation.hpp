#pragma once

#include <vector>

#include "subrift/geometry.hpp"
#include "subrift/rng.hpp"
#include "subrift/shooting.hpp"
#include "subrift/stats.hpp"

namespace subrift {

namespace detail {

inline int grid_index(const BicharPath& path, double t) {
  int N = path.steps();
  int i = static_cast<int>(std::llround(t * N));
  if (i < 0 || i > N) throw ConfigError("time outside [0,1]");
  return i;
}

inline Mat j1_inverse(const JacobiData& jd) {
  int N = static_cast<int>(jd.J.size()) - 1;
  const Mat& J1 = jd.J[N];
  Eigen::JacobiSVD<Mat> svd(J1, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double smin = svd.singularValues().minCoeff();
  double smax = svd.singularValues().maxCoeff();
  if (smin <= 1e-10 * smax)
    throw SingularJ1Error("fluctuation: J_1 is numerically singular (conjugate endpoint)");
  return svd.solve(Mat::Identity(J1.rows(), J1.cols()));
}

// symmetric positive square root
inline Mat sqrt_psd(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Bridge-fluctuation covariance C(s,t) = J_s J_1^-1 K_t^T for s <= t, with
// C(t,s) = C(s,t)^T.
inline Mat covariance(const GeodesicSolution& sol, double s, double t) {
  const JacobiData& jd = sol.jacobi;
  Mat j1inv = detail::j1_inverse(jd);
  bool swap = s > t;
  if (swap) std::swap(s, t);
  int is = detail::grid_index(sol.path, s);
  int it = detail::grid_index(sol.path, t);
  Mat C = jd.J[is] * j1inv * jd.K[it].transpose();
  return swap ? Mat(C.transpose()) : C;
}

// Assembled covariance of the fluctuation field on the uniform grid with G
// subintervals (interior points only; the field vanishes at both ends),
// with its Cholesky factor.
struct FluctuationKernel {
  int G = 0;
  int d = 0;
  std::vector<double> times;  // interior times j/G, j = 1..G-1
  Mat cov;
  Mat chol;
  double min_eig = 0.0;      // of the assembled matrix, before jitter
  double jitter_used = 0.0;  // diagonal shift needed for the factorization
};

inline FluctuationKernel assemble_kernel(const GeodesicSolution& sol, int G) {
  const JacobiData& jd = sol.jacobi;
  int d = static_cast<int>(jd.C1.rows());
  Mat j1inv = detail::j1_inverse(jd);
  int N = sol.path.steps();
  if (N % G != 0) throw ConfigError("assemble_kernel: flow grid must refine the sample grid");
  FluctuationKernel fk;
  fk.G = G;
  fk.d = d;
  int M = G - 1;
  fk.cov.resize(M * d, M * d);
  for (int j = 1; j < G; ++j) fk.times.push_back(static_cast<double>(j) / G);
  for (int a = 1; a < G; ++a) {
    for (int b = a; b < G; ++b) {
      Mat C = jd.J[a * (N / G)] * j1inv * jd.K[b * (N / G)].transpose();
      fk.cov.block((a - 1) * d, (b - 1) * d, d, d) = C;
      fk.cov.block((b - 1) * d, (a - 1) * d, d, d) = C.transpose();
    }
  }
  fk.cov = 0.5 * (fk.cov + fk.cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(fk.cov);
  fk.min_eig = es.eigenvalues().minCoeff();

  double jitter = 0.0;
  for (double j : {0.0, 1e-12, 1e-10, 1e-8, 1e-6}) {
    Mat shifted = fk.cov + j * Mat::Identity(M * d, M * d);
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() == Eigen::Success) {
      fk.chol = llt.matrixL();
      jitter = j;
      fk.jitter_used = j;
      return fk;
    }
    jitter = j;
  }
  (void)jitter;
  throw CholeskyError("assemble_kernel: covariance not factorizable within the jitter ladder");
}

// Exact Gaussian sampler for the assembled kernel; one counter substream per
// sample index, so the ensemble is reproducible and independent of any
// parallel split. The returned grid includes the pinned endpoints.
inline GridSamples sample_kernel(const FluctuationKernel& fk, int n, uint64_t seed) {
  GridSamples gs;
  std::vector<double> ts;
  ts.push_back(0.0);
  for (double t : fk.times) ts.push_back(t);
  ts.push_back(1.0);
  gs.init(ts, fk.d, n);
  int M = fk.G - 1;
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<uint64_t>(i));
    Vec z(M * fk.d);
    for (int k = 0; k < z.size(); ++k) z[k] = rng.normal();
    Vec x = fk.chol * z;
    for (int j = 0; j < M; ++j) gs.set(i, j + 1, x.segment(j * fk.d, fk.d));
  }
  return gs;
}

// Reproducing field of the covariance pairing: v_t = C(t, s) beta on the
// flow grid; pairing it against the second variation recovers <beta, v_s>.
inline std::vector<Vec> reproducing_field(const GeodesicSolution& sol, const Vec& beta,
                                          double s) {
  const JacobiData& jd = sol.jacobi;
  Mat j1inv = detail::j1_inverse(jd);
  int N = sol.path.steps();
  int is = detail::grid_index(sol.path, s);
  std::vector<Vec> v(N + 1);
  // C(t,s) = J_t J_1^-1 K_s^T for t <= s, and K_t (J_1^-1)^T J_s^T for t > s
  Mat left = j1inv * jd.K[is].transpose();
  Mat right = j1inv.transpose() * jd.J[is].transpose();
  for (int i = 0; i <= N; ++i)
    v[i] = (i <= is) ? Vec(jd.J[i] * (left * beta)) : Vec(jd.K[i] * (right * beta));
  return v;
}

// Riemannian representation data along a solved geodesic: curvature
// operators, the Riccati solution A_t = (nabla K_t) K_t^-1, the metric and
// parallel transport on the flow grid.
struct RiemannianData {
  std::vector<Mat> R;
  std::vector<Mat> A;
  int a_valid_until = 0;  // A_t is formed for grid indices <= this
  std::vector<Mat> tau;
  std::vector<Mat> g;        // metric at grid points
  std::vector<Mat> gamma_v;  // Gamma(xdot) at grid points
};

inline RiemannianData riccati_solve(const Model& model, const GeodesicSolution& sol) {
  if (!model.riemannian)
    throw NotRiemannianError("riccati_solve: model diffusivity is not positive-definite");
  const BicharPath& path = sol.path;
  const JacobiData& jd = sol.jacobi;
  int N = path.steps();
  RiemannianData rd;
  rd.R.resize(N + 1);
  rd.A.assign(N + 1, Mat());
  rd.g.resize(N + 1);
  rd.gamma_v.resize(N + 1);
  for (int i = 0; i <= N; ++i) {
    Vec xdot = diffusivity(model, path.x[i]) * path.p[i];
    rd.R[i] = curvature_operator(model, path.x[i], xdot);
    rd.g[i] = metric(model, path.x[i]);
    rd.gamma_v[i] = christoffel_apply(christoffel(model, path.x[i]), xdot);
  }
  rd.tau = parallel_transport(model, path);

  // A_t = (Kdot + Gamma(xdot) K) K^-1 while K_t stays well-conditioned
  double det0 = std::abs(jd.K[0].determinant());
  rd.a_valid_until = 0;
  for (int i = 0; i <= N; ++i) {
    double det = std::abs(jd.K[i].determinant());
    if (det <= 1e-8 * det0) break;
    Mat kdot = kdot_at(model, path, jd, i);
    rd.A[i] = (kdot + rd.gamma_v[i] * jd.K[i]) * jd.K[i].inverse();
    rd.a_valid_until = i;
  }
  if (rd.a_valid_until < N / 2)
    throw SingularJ1Error("riccati_solve: K_t lost rank in the interior (conjugate point)");
  return rd;
}

// Euler scheme for the covariant linear bridge equation
//   nabla v = tau db + A v dt, v_0 = 0,
// driven by a metric-standard Brownian motion in the start fiber; the final
// grid value is pinned to zero. Paths are stored on the coarser output grid.
inline GridSamples sde_sample(const Model& model, const GeodesicSolution& sol,
                              const RiemannianData& rd, int G_out, int n, uint64_t seed) {
  if (!model.riemannian) throw NotRiemannianError("sde_sample: Riemannian models only");
  const BicharPath& path = sol.path;
  int N = path.steps();
  int d = model.d;
  if (N % G_out != 0) throw ConfigError("sde_sample: flow grid must refine the output grid");
  int stride = N / G_out;
  double dt = 1.0 / N;
  Mat S0 = detail::sqrt_psd(diffusivity(model, path.x[0]));

  GridSamples gs;
  std::vector<double> ts(G_out + 1);
  for (int j = 0; j <= G_out; ++j) ts[j] = static_cast<double>(j) / G_out;
  gs.init(ts, d, n);

  double sqdt = std::sqrt(dt);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<uint64_t>(i));
    Vec v = Vec::Zero(d);
    gs.set(i, 0, v);
    for (int k = 0; k < N; ++k) {
      int ia = std::min(k, rd.a_valid_until);
      Vec xi(d);
      for (int c = 0; c < d; ++c) xi[c] = rng.normal();
      Vec drift = (rd.A[ia] - rd.gamma_v[k]) * v;
      v += dt * drift + rd.tau[k] * (S0 * xi) * sqdt;
      if ((k + 1) % stride == 0) gs.set(i, (k + 1) / stride, v);
    }
    gs.set(i, G_out, Vec::Zero(d));  // bridge endpoint pinned
  }
  return gs;
}

// Importance-weighted covariance estimate from the flat parallel-transported
// Brownian bridge, with weights exp{ (1/2) int <v, R v> dt }.
struct ImportanceReport {
  Mat est;           // weighted covariance at the requested pair
  Mat se;            // batch-mean standard error
  double ess = 0.0;  // effective sample size
  double max_weight = 0.0;
  int n = 0;
};

inline ImportanceReport importance_weight_check(const Model& model, const GeodesicSolution& sol,
                                                const RiemannianData& rd, double s, double t,
                                                int G, int n, uint64_t seed,
                                                int batches = 16) {
  if (!model.riemannian)
    throw NotRiemannianError("importance_weight_check: Riemannian models only");
  const BicharPath& path = sol.path;
  int N = path.steps();
  int d = model.d;
  if (N % G != 0) throw ConfigError("importance_weight_check: grid mismatch");
  int stride = N / G;
  double dt = 1.0 / G;
  Mat S0 = detail::sqrt_psd(diffusivity(model, path.x[0]));
  int js = static_cast<int>(std::llround(s * G));
  int jt = static_cast<int>(std::llround(t * G));

  std::vector<double> w(n), logw(n);
  std::vector<Vec> vs(n), vt(n);
  double sqdt = std::sqrt(dt);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<uint64_t>(i));
    // Brownian path in the start fiber on the G-grid, then bridged
    std::vector<Vec> b(G + 1);
    b[0] = Vec::Zero(d);
    for (int k = 1; k <= G; ++k) {
      Vec xi(d);
      for (int c = 0; c < d; ++c) xi[c] = rng.normal();
      b[k] = b[k - 1] + S0 * xi * sqdt;
    }
    double quad = 0.0;
    for (int k = 0; k <= G; ++k) {
      double time = static_cast<double>(k) / G;
      Vec z = b[k] - time * b[G];
      Vec vk = rd.tau[k * stride] * z;
      int gi = k * stride;
      double term = vk.dot(rd.g[gi] * (rd.R[gi] * vk));
      quad += ((k == 0 || k == G) ? 0.5 : 1.0) * term;
      if (k == js) vs[i] = vk;
      if (k == jt) vt[i] = vk;
    }
    logw[i] = 0.5 * quad * dt;
  }
  double lmax = *std::max_element(logw.begin(), logw.end());
  double wsum = 0.0, w2sum = 0.0;
  for (int i = 0; i < n; ++i) {
    w[i] = std::exp(logw[i] - lmax);
    wsum += w[i];
    w2sum += w[i] * w[i];
  }
  ImportanceReport rep;
  rep.n = n;
  rep.ess = wsum * wsum / w2sum;
  rep.max_weight = std::exp(lmax);
  if (rep.ess < 100.0)
    throw InconclusiveError("importance_weight_check: effective sample size below 100");
  Mat acc = Mat::Zero(d, d);
  for (int i = 0; i < n; ++i) acc += w[i] * vs[i] * vt[i].transpose();
  rep.est = acc / wsum;

  // batch means of the self-normalized estimator
  int B = batches;
  std::vector<Mat> bm;
  for (int b = 0; b < B; ++b) {
    int lo = static_cast<int>(static_cast<long long>(b) * n / B);
    int hi = static_cast<int>(static_cast<long long>(b + 1) * n / B);
    double bw = 0.0;
    Mat bacc = Mat::Zero(d, d);
    for (int i = lo; i < hi; ++i) {
      bw += w[i];
      bacc += w[i] * vs[i] * vt[i].transpose();
    }
    if (bw > 0) bm.push_back(bacc / bw);
  }
  Mat mean = Mat::Zero(d, d);
  for (const Mat& m : bm) mean += m;
  mean /= bm.size();
  Mat var = Mat::Zero(d, d);
  for (const Mat& m : bm) var += (m - mean).cwiseProduct(m - mean);
  var /= (bm.size() - 1);
  rep.se = (var / bm.size()).cwiseSqrt();
  return rep;
}

}  // namespace subrift
