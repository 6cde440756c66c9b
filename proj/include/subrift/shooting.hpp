#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "subrift/hamflow.hpp"
#include "subrift/rng.hpp"

namespace subrift {

struct ShootResult {
  Vec endpoint;
  Mat J1;
  PhasePoint lambda1;
};

// Endpoint of the time-1 flow and its derivative with respect to the initial
// momentum.
inline ShootResult shoot(const Model& model, const Vec& x, const Vec& p0,
                         const FlowOptions& opts = {}) {
  int d = model.d;
  double h = 1.0 / opts.steps;
  detail::AugState s;
  s.x = x;
  s.p = p0;
  s.Jx = Mat::Zero(d, d);
  s.Jp = Mat::Identity(d, d);
  s.u.resize(0, 0);
  for (int i = 0; i < opts.steps; ++i) {
    s = detail::aug_rk4_step(model, s, h, +1.0);
    detail::check_state(s, opts.escape_bound, "shoot");
  }
  return {s.x, s.Jx, {s.x, s.p}};
}

struct SolveOptions {
  int starts = 32;
  int steps = 1000;
  double tol_bvp = 1e-10;
  int max_iter = 60;
  int max_backtracks = 30;
  double dedupe_tol = 1e-4;
  double escape_bound = 1e6;
  uint64_t seed = 12345;
  std::vector<double>* residual_log = nullptr;  // per-iteration residuals, first start only
};

struct GeodesicSolution {
  PhasePoint lambda0;
  BicharPath path;
  JacobiData jacobi;
  double energy = 0.0;
  double distance = 0.0;
  double residual = 0.0;
  bool minimal = false;
  int multiplicity = 0;
  double multistart_energy_gap = 0.0;  // best competing energy minus returned one
};

namespace detail {

struct Candidate {
  Vec p0;
  double energy;
  double residual;
};

// Damped Newton iteration on p0 -> projection of the time-1 flow.
inline std::optional<Candidate> newton_from(const Model& model, const Vec& x, const Vec& y,
                                            Vec p0, const SolveOptions& o,
                                            std::vector<double>* log = nullptr) {
  FlowOptions fo{o.steps, o.escape_bound};
  double res = -1.0;
  for (int it = 0; it < o.max_iter; ++it) {
    ShootResult sr;
    try {
      sr = shoot(model, x, p0, fo);
    } catch (const SubriftError&) {
      return std::nullopt;
    }
    Vec r = y - sr.endpoint;
    res = r.norm();
    if (log) log->push_back(res);
    if (res <= o.tol_bvp) {
      double energy = 2.0 * hamiltonian(model, {x, p0});
      return Candidate{p0, energy, res};
    }
    Eigen::FullPivLU<Mat> lu(sr.J1);
    if (!lu.isInvertible()) return std::nullopt;
    Vec dp = lu.solve(r);
    if (!all_finite(dp)) return std::nullopt;
    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < o.max_backtracks; ++bt) {
      Vec trial = p0 + alpha * dp;
      double trial_res;
      try {
        trial_res = (y - shoot(model, x, trial, fo).endpoint).norm();
      } catch (const SubriftError&) {
        alpha *= 0.5;
        continue;
      }
      if (trial_res < res * (1.0 - 1e-4 * alpha)) {
        p0 = trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

// Solves the two-point problem: find p0 with the time-1 flow from (x, p0)
// projecting to y. Multistart Newton; returns the minimal-energy converged
// solution with multiplicity = number of distinct converged momenta.
inline GeodesicSolution solve_geodesic(const Model& model, const Vec& x, const Vec& y,
                                       const SolveOptions& opts = {}) {
  int d = model.d;
  Vec gap = y - x;
  std::vector<Vec> starts;

  // deterministic seed: straight-chart momentum solving a(x) p = y - x
  Mat a0 = diffusivity(model, x);
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(a0);
  starts.push_back(cod.solve(gap));

  // Gaussian momenta scaled so that 2 H(x, p) is close to |y-x|^2
  CounterRng rng(opts.seed, 0xC0FFEE);
  double target = std::max(gap.squaredNorm(), 1e-8);
  for (int k = 1; k < opts.starts; ++k) {
    Vec g(d);
    for (int i = 0; i < d; ++i) g[i] = rng.normal();
    double q = g.dot(a0 * g);
    double scale = q > 1e-12 ? std::sqrt(target / q) : 1.0;
    // widen the search over momentum magnitudes
    double stretch = std::pow(2.0, (k % 5) - 2);
    starts.push_back(g * scale * stretch);
  }

  std::vector<detail::Candidate> found;
  for (size_t si = 0; si < starts.size(); ++si) {
    auto cand = detail::newton_from(model, x, y, starts[si], opts,
                                    si == 0 ? opts.residual_log : nullptr);
    if (!cand) continue;
    bool dup = false;
    for (const auto& c : found) {
      if ((c.p0 - cand->p0).norm() <= opts.dedupe_tol) {
        dup = true;
        break;
      }
    }
    if (!dup) found.push_back(*cand);
  }
  if (found.empty())
    throw NoConvergenceError("solve_geodesic: no multistart converged for model " + model.name);

  std::sort(found.begin(), found.end(),
            [](const detail::Candidate& a, const detail::Candidate& b) {
              return a.energy < b.energy;
            });
  const detail::Candidate& best = found.front();

  GeodesicSolution sol;
  sol.lambda0 = {x, best.p0};
  FlowOptions fo{opts.steps, opts.escape_bound};
  sol.path = flow(model, sol.lambda0, 1.0, fo);
  sol.jacobi = jacobi_pair(model, sol.path, fo);
  sol.energy = best.energy;
  sol.distance = std::sqrt(std::max(best.energy, 0.0));
  sol.residual = best.residual;
  sol.multiplicity = static_cast<int>(found.size());
  sol.minimal = true;  // minimal among converged candidates by construction
  sol.multistart_energy_gap =
      found.size() > 1 ? found[1].energy - best.energy : std::numeric_limits<double>::infinity();
  return sol;
}

inline double distance(const Model& model, const Vec& x, const Vec& y,
                       const SolveOptions& opts = {}) {
  if ((x - y).norm() == 0.0) return 0.0;
  return solve_geodesic(model, x, y, opts).distance;
}

// Builds a solution record for a prescribed initial phase point, without any
// boundary-value solve. Used to study geodesics that are not minimal (the
// minimality-related flags stay pessimistic).
inline GeodesicSolution solution_from_initial(const Model& model, const PhasePoint& lam0,
                                              int steps = 1000, double escape_bound = 1e6) {
  FlowOptions fo{steps, escape_bound};
  GeodesicSolution sol;
  sol.lambda0 = lam0;
  sol.path = flow(model, lam0, 1.0, fo);
  sol.jacobi = jacobi_pair(model, sol.path, fo);
  sol.energy = 2.0 * sol.path.H0;
  sol.distance = std::sqrt(std::max(sol.energy, 0.0));
  sol.residual = 0.0;
  sol.multiplicity = 1;
  sol.minimal = false;
  sol.multistart_energy_gap = 0.0;
  return sol;
}

struct CutLocusReport {
  double detJ1 = 0.0;
  double min_singular_J1 = 0.0;
  std::optional<double> first_conjugate_time;
  double symmetric_residual = 0.0;  // ||J1 - K0^T||
  bool regular = false;             // C1bar invertible
  bool unique_minimal = false;
  bool outside_cut_locus = false;
  double conjugate_margin = 0.0;  // min over grid of sigma_min(J_t)/(t ||J1||)
};

// Diagnostics for the solved geodesic: determinant and singular values of
// J_1, first conjugate time from the sign change of det J_t (refined by
// linear interpolation on the grid), symmetry defect, regularity.
inline CutLocusReport classify(const Model& model, const GeodesicSolution& sol,
                               double tol_conj_rel = 1e-6) {
  (void)model;
  const JacobiData& jd = sol.jacobi;
  int N = static_cast<int>(jd.J.size()) - 1;
  CutLocusReport rep;
  const Mat& J1 = jd.J[N];
  rep.detJ1 = J1.determinant();
  Eigen::JacobiSVD<Mat> svd(J1);
  rep.min_singular_J1 = svd.singularValues().minCoeff();
  double j1_norm = svd.singularValues().maxCoeff();
  rep.symmetric_residual = (J1 - jd.K[0].transpose()).norm();

  // scan det J_t for a sign change; skip the initial ramp where J_t ~ t a(x)
  int i0 = std::max(2, N / 100);
  double prev = jd.J[i0].determinant();
  rep.conjugate_margin = std::numeric_limits<double>::infinity();
  for (int i = i0; i <= N; ++i) {
    double det = jd.J[i].determinant();
    double t = static_cast<double>(i) / N;
    Eigen::JacobiSVD<Mat> si(jd.J[i]);
    rep.conjugate_margin =
        std::min(rep.conjugate_margin, si.singularValues().minCoeff() / (t * j1_norm));
    if (i > i0 && !rep.first_conjugate_time && ((det < 0.0) != (prev < 0.0))) {
      double t_prev = static_cast<double>(i - 1) / N;
      double w = prev / (prev - det);
      rep.first_conjugate_time = t_prev + w / N;
    }
    prev = det;
  }

  Eigen::SelfAdjointEigenSolver<Mat> es(jd.C1bar);
  double emin = es.eigenvalues().minCoeff();
  double emax = es.eigenvalues().maxCoeff();
  rep.regular = emin > 1e-10 * std::max(emax, 1e-300);
  rep.unique_minimal = sol.multistart_energy_gap > 1e-9 * (1.0 + sol.energy);
  rep.outside_cut_locus =
      rep.unique_minimal && rep.min_singular_J1 > tol_conj_rel * j1_norm;
  return rep;
}

}  // namespace subrift
