// Acceptance suite: one pass/fail line per criterion, exercising the library
// end to end at the tolerances the project commits to.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "subrift/cli.hpp"
#include "subrift/fluctuation.hpp"
#include "subrift/montecarlo.hpp"
#include "subrift/secondvar.hpp"
#include "subrift/zoo.hpp"

using namespace subrift;

namespace {

int g_failures = 0;

void criterion(int id, const std::string& name, const std::function<bool(std::string&)>& body) {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  criterion %2d: %s  (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", id, name.c_str(),
              secs, detail.empty() ? "" : "  -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}
Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

GeodesicSolution sphere_equator(double L, int steps = 1000) {
  return solution_from_initial(make_sphere2(), {vec2(1, 0), vec2(0, L)}, steps);
}
GeodesicSolution hyperbolic_diameter(double L, int steps = 1000) {
  return solution_from_initial(make_hyperbolic2(), {vec2(0, 0), vec2(2 * L, 0)}, steps);
}
GeodesicSolution heisenberg_line(int steps = 1000) {
  return solution_from_initial(make_heisenberg(), {vec3(0, 0, 0), vec3(1, 0, 0)}, steps);
}

// window-bias band |M_s M_t^T| rho^2 through the conditional-mean map
Mat window_band(const Model& model, const GeodesicSolution& sol, double s, double t,
                double rho) {
  const JacobiData& jd = sol.jacobi;
  int N = sol.path.steps();
  auto mmap = [&](double tt) {
    int it = static_cast<int>(std::llround(tt * N));
    Mat Ct = Mat::Zero(model.d, model.d);
    double dt = 1.0 / N;
    for (int i = 0; i <= it; ++i) {
      Mat uinv = jd.u[i].inverse();
      Mat f = uinv * diffusivity(model, sol.path.x[i]) * uinv.transpose();
      Ct += ((i == 0 || i == it) ? 0.5 : 1.0) * f * dt;
    }
    return Mat(jd.u[it] * Ct * jd.C1.inverse() * jd.u[N].inverse());
  };
  return (mmap(s) * mmap(t).transpose()).cwiseAbs() * rho * rho;
}

bool within_se(const Mat& got, const Mat& want, const Mat& se, double k, const Mat* band,
               std::string& why, double slack = 1e-12) {
  for (int i = 0; i < got.rows(); ++i)
    for (int j = 0; j < got.cols(); ++j) {
      double tol = k * se(i, j) + (band ? (*band)(i, j) : 0.0) + slack;
      if (std::abs(got(i, j) - want(i, j)) > tol) {
        std::ostringstream os;
        os << "entry (" << i << "," << j << "): |" << got(i, j) << " - " << want(i, j)
           << "| > " << tol;
        why = os.str();
        return false;
      }
    }
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");

  criterion(1, "euclidean covariance is s(1-t) I on all grid pairs", [](std::string& why) {
    GeodesicSolution sol =
        solution_from_initial(make_euclidean(2), {vec2(0, 0), vec2(1, 1)}, 400);
    int G = 16;
    for (int a = 0; a <= G; ++a)
      for (int b = a; b <= G; ++b) {
        double s = static_cast<double>(a) / G, t = static_cast<double>(b) / G;
        Mat C = covariance(sol, s, t);
        Mat want = s * (1.0 - t) * Mat::Identity(2, 2);
        if ((C - want).cwiseAbs().maxCoeff() > 1e-10) {
          why = "pair (" + std::to_string(s) + "," + std::to_string(t) + ")";
          return false;
        }
      }
    return true;
  });

  criterion(2, "symplectic symmetry J1 = K0^T across the zoo", [](std::string& why) {
    struct Case {
      const char* name;
      GeodesicSolution sol;
    };
    std::vector<Case> cases;
    cases.push_back({"euclidean2",
                     solution_from_initial(make_euclidean(2), {vec2(0.1, 0.2), vec2(1, -0.5)},
                                           1000)});
    cases.push_back({"sphere2", sphere_equator(1.0)});
    cases.push_back({"hyperbolic2", hyperbolic_diameter(1.0)});
    cases.push_back({"heisenberg", heisenberg_line()});
    for (auto& c : cases) {
      int N = c.sol.path.steps();
      double defect =
          (c.sol.jacobi.J[N] - c.sol.jacobi.K[0].transpose()).norm() / c.sol.jacobi.J[N].norm();
      if (defect > 1e-7) {
        why = std::string(c.name) + " defect " + std::to_string(defect);
        return false;
      }
    }
    return true;
  });

  criterion(3, "forward/backward Jacobi integral identity", [](std::string& why) {
    for (const char* name : {"sphere2", "hyperbolic2"}) {
      Model m = make_model(name);
      GeodesicSolution sol =
          m.name == "sphere2" ? sphere_equator(1.4, 2000) : hyperbolic_diameter(1.4, 2000);
      const JacobiData& jd = sol.jacobi;
      int N = sol.path.steps();
      double h = 1.0 / N;
      for (double tc : {0.25, 0.5, 0.75}) {
        int ic = static_cast<int>(tc * N);
        Mat acc = Mat::Zero(2, 2);
        for (int i = 0; i <= ic; ++i) {
          Mat kinv = jd.K[i].inverse();
          acc += ((i == 0 || i == ic) ? 0.5 : 1.0) * kinv *
                 diffusivity(m, sol.path.x[i]) * kinv.transpose();
        }
        Mat rhs = jd.K[ic] * (acc * h) * jd.K[0].transpose();
        double err = (jd.J[ic] - rhs).cwiseAbs().maxCoeff();
        if (err > 1e-6) {
          why = std::string(name) + " t=" + std::to_string(tc) + " err " + std::to_string(err);
          return false;
        }
      }
    }
    return true;
  });

  criterion(4, "first conjugate time of the length-3.5 sphere geodesic", [](std::string& why) {
    GeodesicSolution sol = sphere_equator(3.5, 2000);
    CutLocusReport rep = classify(make_sphere2(), sol);
    if (!rep.first_conjugate_time) {
      why = "no conjugate time found";
      return false;
    }
    double want = oracles::kPi / 3.5;
    if (std::abs(*rep.first_conjugate_time - want) > 1e-4) {
      why = "got " + std::to_string(*rep.first_conjugate_time) + " want " + std::to_string(want);
      return false;
    }
    return true;
  });

  criterion(5, "Riccati solutions match the constant-curvature closed forms",
            [](std::string& why) {
    {
      GeodesicSolution sol =
          solution_from_initial(make_euclidean(2), {vec2(0, 0), vec2(1, 2)}, 1000);
      RiemannianData rd = riccati_solve(make_euclidean(2), sol);
      int N = sol.path.steps();
      for (double t : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        int i = static_cast<int>(std::llround(t * N));
        Mat want = -1.0 / (1.0 - t) * Mat::Identity(2, 2);
        if ((rd.A[i] - want).cwiseAbs().maxCoeff() > 1e-8) {
          why = "euclidean t=" + std::to_string(t);
          return false;
        }
      }
    }
    {
      double L = 1.4;
      GeodesicSolution sol = sphere_equator(L, 1000);
      RiemannianData rd = riccati_solve(make_sphere2(), sol);
      int N = sol.path.steps();
      for (double t : {0.2, 0.5, 0.8}) {
        int i = static_cast<int>(std::llround(t * N));
        double ts = static_cast<double>(i) / N;
        Vec ep = vec2(std::cos(L * ts), std::sin(L * ts));
        double got = ep.dot(rd.A[i] * ep);
        double want = oracles::riccati_A_orth(1.0, L, ts);
        if (std::abs(got - want) > 1e-4) {
          why = "sphere t=" + std::to_string(ts);
          return false;
        }
      }
    }
    return true;
  });

  criterion(6, "second-variation spectra: flat, sphere, heisenberg", [](std::string& why) {
    {
      GeodesicSolution sol =
          solution_from_initial(make_euclidean(2), {vec2(0, 0), vec2(1, 0.5)}, 400);
      SecondVar sv(make_euclidean(2), sol, 16);
      if ((sv.spectrum().mu.array() - 1.0).abs().maxCoeff() > 1e-9) {
        why = "euclidean spectrum deviates from one";
        return false;
      }
    }
    {
      SecondVar sv(make_sphere2(), sphere_equator(2.0), 32);
      if (!(sv.spectrum().mu[0] > 0.3)) {
        why = "sphere L=2 mu_min " + std::to_string(sv.spectrum().mu[0]);
        return false;
      }
    }
    {
      SecondVar sv(make_sphere2(), sphere_equator(oracles::kPi - 0.05), 32);
      if (!(sv.spectrum().mu[0] < 0.05 && sv.spectrum().mu[0] > 0.0)) {
        why = "sphere near-antipode mu_min " + std::to_string(sv.spectrum().mu[0]);
        return false;
      }
    }
    {
      GeodesicSolution sol = heisenberg_line();
      SecondVar a(make_heisenberg(), sol, 16);
      SecondVar b(make_heisenberg(), sol, 32);
      double m16 = a.spectrum().mu[0], m32 = b.spectrum().mu[0];
      if (!(m16 > 0.1 && m32 > 0.1 && std::abs(m16 - m32) <= 0.02 * std::max(m16, m32))) {
        why = "heisenberg mu_min " + std::to_string(m16) + " vs " + std::to_string(m32);
        return false;
      }
    }
    return true;
  });

  criterion(7, "first variation vanishes on 20 kernel directions", [](std::string& why) {
    GeodesicSolution sol = heisenberg_line();
    SecondVar sv(make_heisenberg(), sol, 24);
    CounterRng rng(71, 0);
    const QSpectrum& spec = sv.spectrum();
    for (int trial = 0; trial < 20; ++trial) {
      Vec coeffs(spec.dim());
      for (int i = 0; i < spec.dim(); ++i) coeffs[i] = rng.normal();
      ControlGrid k = sv.kernel_control(coeffs);
      double L = sv.first_variation(k);
      if (std::abs(L) > 1e-8 * sv.control().norm() * k.norm()) {
        why = "trial " + std::to_string(trial) + " L " + std::to_string(L);
        return false;
      }
    }
    return true;
  });

  criterion(8, "reproducing property of the covariance kernel", [](std::string& why) {
    struct Case {
      const char* name;
      GeodesicSolution sol;
      Vec beta;
    };
    std::vector<Case> cases;
    cases.push_back({"heisenberg", heisenberg_line(1536), vec3(0.2, -0.4, 1.0)});
    cases.push_back({"sphere2", sphere_equator(1.9, 1536), vec2(0.3, -1.0)});
    for (auto& c : cases) {
      Model model = make_model(c.name);
      int Nc = 48;
      SecondVar sv(model, c.sol, Nc);
      double s = 0.5;
      auto w_full = reproducing_field(c.sol, c.beta, s);
      int NJ = c.sol.path.steps();
      std::vector<Vec> w_nodes(Nc + 1);
      for (int j = 0; j <= Nc; ++j) w_nodes[j] = w_full[(j * NJ) / Nc];
      ControlGrid kw = sv.project_kernel(sv.reconstruct_control(w_nodes));
      CounterRng rng(81, 0);
      const QSpectrum& spec = sv.spectrum();
      for (int trial = 0; trial < 10; ++trial) {
        Vec coeffs(spec.dim());
        for (int i = 0; i < spec.dim(); ++i) coeffs[i] = rng.normal();
        ControlGrid kv = sv.kernel_control(coeffs);
        auto v = sv.variation_path_fine(kv);
        double vsup = 0.0;
        for (const Vec& vv : v) vsup = std::max(vsup, vv.norm());
        double Q = sv.q_form(kv, kw);
        double want = c.beta.dot(v[sv.fine_steps() / 2]);
        if (std::abs(Q - want) > 1e-3 * c.beta.norm() * vsup) {
          why = std::string(c.name) + " trial " + std::to_string(trial) + ": |" +
                std::to_string(Q) + " - " + std::to_string(want) + "|";
          return false;
        }
      }
    }
    return true;
  });

  criterion(9, "heat-kernel constants: flat closed form, heisenberg stability",
            [](std::string& why) {
    Model e2 = make_euclidean(2);
    GeodesicSolution se = solve_geodesic(e2, vec2(0, 0), vec2(1, 1), SolveOptions{8, 400});
    HeatConstant hc = heat_constant(e2, se, 16);
    double want = 1.0 / (2.0 * oracles::kPi);
    if (std::abs(hc.c - want) > 1e-6) {
      why = "euclidean c " + std::to_string(hc.c);
      return false;
    }
    for (double t : {1.0, 0.3, 0.05, 0.01}) {
      double dist = std::sqrt(2.0);
      double lhs = t * std::exp(dist * dist / (2 * t)) * oracles::gauss_kernel(2, t, dist);
      if (std::abs(lhs - want) > 1e-12 * (1.0 + std::abs(want))) {
        why = "exact kernel identity at t=" + std::to_string(t);
        return false;
      }
    }
    Model h = make_heisenberg();
    GeodesicSolution sh =
        solve_geodesic(h, vec3(0, 0, 0), vec3(1, 0, 0), SolveOptions{12, 1000});
    HeatConstant c32 = heat_constant(h, sh, 32);
    HeatConstant c64 = heat_constant(h, sh, 64);
    if (std::abs(c32.c - c64.c) > 0.01 * std::abs(c64.c)) {
      why = "heisenberg c32 " + std::to_string(c32.c) + " c64 " + std::to_string(c64.c);
      return false;
    }
    return true;
  });

  criterion(10, "central limit of the exact flat bridge", [](std::string& why) {
    GeodesicSolution sol =
        solution_from_initial(make_euclidean(2), {vec2(0, 0), vec2(1, 0)}, 400);
    SdeConfig cfg;
    cfg.eps = 0.1;
    cfg.n = 20000;
    cfg.grid = 16;
    cfg.seed = 1010;
    BridgeEnsemble be = bridge_exact_euclidean(2, cfg);
    for (auto [s, t] : std::vector<std::pair<double, double>>{{0.25, 0.75}, {0.5, 0.5}}) {
      CovEstimate est = empirical_covariance(be, s, t);
      Mat want = covariance(sol, s, t);
      std::string w;
      if (!within_se(est.cov, want, est.se, 3.0, nullptr, w)) {
        why = "pair (" + std::to_string(s) + "," + std::to_string(t) + ") " + w;
        return false;
      }
    }
    return true;
  });

  criterion(11, "central limit of the windowed heisenberg bridge with rho sweep",
            [](std::string& why) {
    Model h = make_heisenberg();
    GeodesicSolution sol = heisenberg_line();
    Mat want = covariance(sol, 0.5, 0.5);
    double prev_disc = std::numeric_limits<double>::infinity();
    double prev_se = 0.0;
    for (double rho : {1.0, 0.5, 0.25}) {
      SdeConfig cfg;
      cfg.eps = 0.05;
      cfg.rho = rho;
      cfg.n = 200000;
      cfg.steps = 400;
      cfg.grid = 8;
      cfg.seed = 1111;
      cfg.threads = 2;
      BridgeEnsemble be = bridge_ensemble(h, sol, cfg);
      CovEstimate est = empirical_covariance(be, 0.5, 0.5);
      if (rho == 0.5) {
        Mat band = window_band(h, sol, 0.5, 0.5, rho);
        std::string w;
        if (!within_se(est.cov, want, est.se, 5.0, &band, w, 1e-4)) {
          why = "rho=0.5 " + w;
          return false;
        }
      }
      double disc = (est.cov - want).cwiseAbs().maxCoeff();
      double se = est.se.maxCoeff();
      if (disc > prev_disc + 2.0 * (se + prev_se)) {
        why = "discrepancy grew in the rho sweep at rho=" + std::to_string(rho);
        return false;
      }
      prev_disc = disc;
      prev_se = se;
    }
    return true;
  });

  criterion(12, "three representations of the sphere fluctuation covariance",
            [](std::string& why) {
    Model s2 = make_sphere2();
    GeodesicSolution sol = sphere_equator(1.0, 1024);
    RiemannianData rd = riccati_solve(s2, sol);
    FluctuationKernel fk = assemble_kernel(sol, 8);
    GridSamples chol = sample_kernel(fk, 20000, 1212);
    GridSamples sde = sde_sample(s2, sol, rd, 8, 20000, 1213);
    CovEstimate ec = pair_covariance(chol, 4, 4);
    CovEstimate es = pair_covariance(sde, 4, 4);
    ImportanceReport rep = importance_weight_check(s2, sol, rd, 0.5, 0.5, 8, 20000, 1214);
    auto close = [&](const Mat& a, const Mat& sa, const Mat& b, const Mat& sb) {
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          double tol =
              5.0 * std::sqrt(sa(i, j) * sa(i, j) + sb(i, j) * sb(i, j)) + 2e-4;
          if (std::abs(a(i, j) - b(i, j)) > tol) return false;
        }
      return true;
    };
    if (!close(ec.cov, ec.se, es.cov, es.se)) {
      why = "cholesky vs sde";
      return false;
    }
    if (!close(ec.cov, ec.se, rep.est, rep.se)) {
      why = "cholesky vs importance";
      return false;
    }
    if (!close(es.cov, es.se, rep.est, rep.se)) {
      why = "sde vs importance";
      return false;
    }
    return true;
  });

  criterion(13, "small-time density asymptotics by weighted counting", [](std::string& why) {
    Model e2 = make_euclidean(2);
    GeodesicSolution se = solution_from_initial(e2, {vec2(0, 0), vec2(1, 0)}, 400);
    SdeConfig cfg;
    cfg.n = 100000;
    cfg.steps = 200;
    cfg.seed = 1313;
    cfg.threads = 2;
    auto table = varadhan_estimate(e2, se, {0.2, 0.1, 0.05, 0.02}, cfg);
    for (const auto& row : table) {
      if (row.inconclusive) {
        why = "euclidean inconclusive at eps=" + std::to_string(row.eps);
        return false;
      }
      double analytic = row.eps * std::log(oracles::gauss_kernel(2, row.eps, 1.0));
      if (std::abs(row.eps_log_p - analytic) > 0.05) {
        why = "euclidean eps=" + std::to_string(row.eps) + " got " +
              std::to_string(row.eps_log_p) + " want " + std::to_string(analytic);
        return false;
      }
    }
    Model h = make_heisenberg();
    GeodesicSolution sh = heisenberg_line();
    SdeConfig hcfg;
    hcfg.n = 300000;
    hcfg.steps = 250;
    hcfg.seed = 1314;
    hcfg.threads = 2;
    auto htable = varadhan_estimate(h, sh, {0.1, 0.05, 0.02}, hcfg);
    const auto& last = htable.back();
    if (last.inconclusive) {
      why = "heisenberg inconclusive at eps=0.02";
      return false;
    }
    if (std::abs(last.eps_log_p - (-0.5)) > 0.15) {
      why = "heisenberg eps=0.02 got " + std::to_string(last.eps_log_p);
      return false;
    }
    return true;
  });

  criterion(14, "bridge concentration tightens as the scale shrinks", [](std::string& why) {
    {
      std::vector<BridgeEnsemble> list;
      for (double eps : {0.2, 0.1, 0.05}) {
        SdeConfig cfg;
        cfg.eps = eps;
        cfg.n = 20000;
        cfg.grid = 32;
        cfg.seed = 1414;
        list.push_back(bridge_exact_euclidean(2, cfg));
      }
      auto rows = concentration_stat(list, 0.5);
      for (size_t i = 0; i + 1 < rows.size(); ++i)
        if (rows[i + 1].tail_fraction >
            rows[i].tail_fraction + 2.0 * (rows[i].se + rows[i + 1].se)) {
          why = "euclidean tail grew from eps=" + std::to_string(rows[i].eps);
          return false;
        }
    }
    {
      Model h = make_heisenberg();
      GeodesicSolution sol = heisenberg_line();
      std::vector<BridgeEnsemble> list;
      for (double eps : {0.2, 0.1, 0.05}) {
        SdeConfig cfg;
        cfg.eps = eps;
        cfg.rho = 0.5;
        cfg.n = 60000;
        cfg.steps = 200;
        cfg.grid = 20;
        cfg.seed = 1415;
        cfg.threads = 2;
        list.push_back(bridge_ensemble(h, sol, cfg));
      }
      auto rows = concentration_stat(list, 0.5);
      for (size_t i = 0; i + 1 < rows.size(); ++i)
        if (rows[i + 1].tail_fraction >
            rows[i].tail_fraction + 2.0 * (rows[i].se + rows[i + 1].se)) {
          why = "heisenberg tail grew from eps=" + std::to_string(rows[i].eps);
          return false;
        }
    }
    return true;
  });

  criterion(15, "shared-diffusivity frames are computationally equivalent",
            [](std::string& why) {
    Model sx = make_sre(false);
    Model sy = make_sre(true);
    CounterRng rng(1515, 0);
    std::vector<Vec> pts;
    for (int i = 0; i < 20; ++i)
      pts.push_back(vec2(4 * (rng.uniform() - 0.5), 4 * (rng.uniform() - 0.5)));
    PhasePoint lam0{vec2(1, 0), vec2(0, 1)};
    auto rep = structure_equivalence_probe(sx, sy, pts, lam0, 1.0, {1000, 1e6});
    if (rep.max_a_gap > 1e-12) {
      why = "diffusivity gap " + std::to_string(rep.max_a_gap);
      return false;
    }
    if (rep.flow_endpoint_gap > 1e-8) {
      why = "flow endpoint gap " + std::to_string(rep.flow_endpoint_gap);
      return false;
    }
    Vec x = vec2(0.5, 1.0), y = vec2(1.2, 1.5);
    SolveOptions so{16, 1000};
    GeodesicSolution gx = solve_geodesic(sx, x, y, so);
    GeodesicSolution gy = solve_geodesic(sy, x, y, so);
    HeatConstant cx = heat_constant(sx, gx, 32);
    HeatConstant cy = heat_constant(sy, gy, 32);
    if (std::abs(cx.c - cy.c) > 0.01 * std::abs(cy.c)) {
      why = "heat constants " + std::to_string(cx.c) + " vs " + std::to_string(cy.c);
      return false;
    }
    return true;
  });

  criterion(16, "every CLI subcommand is byte-reproducible", [](std::string& why) {
#ifndef SUBRIFT_CLI_PATH
    why = "CLI path not configured";
    return false;
#else
    namespace fs = std::filesystem;
    fs::path base = fs::temp_directory_path() / "subrift_accept16";
    fs::remove_all(base);
    struct Run {
      const char* sub;
      std::string args;
    };
    std::string flat = " --model euclidean2 --x 0,0 --y 1,0 --starts 4 --steps 400";
    std::vector<Run> runs = {
        {"geodesic", flat},
        {"conjugate", flat + " --control-n 12"},
        {"qspec", flat + " --control-n 12"},
        {"heat-const", flat + " --control-n 12"},
        {"fluctuate", flat + " --grid 8 --n 50 --seed 7"},
        {"verify-clt", flat + " --grid 8 --n 2000 --seed 7 --eps 0.1 --mc-steps 100"},
        {"varadhan", flat + " --n 2000 --seed 7 --eps 0.2 --mc-steps 100"},
    };
    for (const Run& r : runs) {
      for (int rep = 0; rep < 2; ++rep) {
        fs::path out = base / (std::string(r.sub) + (rep ? "_b" : "_a"));
        std::string cmd = std::string(SUBRIFT_CLI_PATH) + " " + r.sub + r.args + " --out " +
                          out.string() + " >/dev/null 2>&1";
        int rc = std::system(cmd.c_str());
        if (rc != 0) {
          why = std::string(r.sub) + " exited with " + std::to_string(rc);
          return false;
        }
      }
      fs::path a = base / (std::string(r.sub) + "_a");
      fs::path b = base / (std::string(r.sub) + "_b");
      for (const auto& entry : fs::directory_iterator(a)) {
        fs::path twin = b / entry.path().filename();
        if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) {
          why = std::string(r.sub) + ": " + entry.path().filename().string() + " differs";
          return false;
        }
      }
    }

    // the seed environment variable overrides conflicting --seed flags
    for (int rep = 0; rep < 2; ++rep) {
      fs::path out = base / (std::string("env") + (rep ? "_b" : "_a"));
      std::string cmd = std::string("SUBRIFT_SEED=99 ") + SUBRIFT_CLI_PATH +
                        " fluctuate --model euclidean2 --x 0,0 --y 1,0 --starts 4"
                        " --steps 400 --grid 8 --n 20 --seed " +
                        (rep ? "111" : "222") + " --out " + out.string() + " >/dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        why = "env-seed run failed";
        return false;
      }
    }
    if (slurp(base / "env_a" / "fluctuate_samples.csv") !=
        slurp(base / "env_b" / "fluctuate_samples.csv")) {
      why = "SUBRIFT_SEED did not override the seed flag";
      return false;
    }
    return true;
#endif
  });

  std::printf("%s: %d criterion(s) failed\n", g_failures ? "FAIL" : "PASS", g_failures);
  return g_failures ? 1 : 0;
}
