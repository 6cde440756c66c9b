#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "subrift/rng.hpp"
#include "subrift/shooting.hpp"
#include "subrift/zoo.hpp"

using namespace subrift;

namespace {

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

SolveOptions fast_opts(int starts = 8, int steps = 400) {
  SolveOptions o;
  o.starts = starts;
  o.steps = steps;
  return o;
}

}  // namespace

TEST_CASE("shoot: euclidean and heisenberg endpoints") {
  Model e2 = make_euclidean(2);
  auto sr = shoot(e2, vec2(0, 0), vec2(2, -1), {200, 1e6});
  REQUIRE((sr.endpoint - vec2(2, -1)).norm() < 1e-13);
  REQUIRE((sr.J1 - Mat::Identity(2, 2)).norm() < 1e-12);

  Model h = make_heisenberg();
  auto sh = shoot(h, vec3(0, 0, 0), vec3(1, 0, 0), {400, 1e6});
  REQUIRE((sh.endpoint - vec3(1, 0, 0)).norm() < 1e-10);
}

TEST_CASE("shoot past the sphere antipode: J1 nearly singular") {
  Model s2 = make_sphere2();
  double L = oracles::kPi + 0.1;
  auto sr = shoot(s2, vec2(1, 0), vec2(0, L), {1000, 1e6});
  Eigen::JacobiSVD<Mat> svd(sr.J1);
  REQUIRE(svd.singularValues().minCoeff() < 0.05);
}

TEST_CASE("solve_geodesic: euclidean straight line") {
  Model e2 = make_euclidean(2);
  GeodesicSolution sol = solve_geodesic(e2, vec2(0, 0), vec2(3, 4), fast_opts());
  REQUIRE((sol.lambda0.p - vec2(3, 4)).norm() < 1e-9);
  REQUIRE(sol.distance == Catch::Approx(5.0).margin(1e-10));
  REQUIRE(sol.multiplicity == 1);
  REQUIRE(sol.minimal);
}

TEST_CASE("solve_geodesic: heisenberg straight minimizer") {
  Model h = make_heisenberg();
  GeodesicSolution sol = solve_geodesic(h, vec3(0, 0, 0), vec3(1, 0, 0), fast_opts(16, 600));
  REQUIRE(sol.distance == Catch::Approx(1.0).margin(1e-8));
  REQUIRE(std::abs(sol.lambda0.p[2]) < 1e-6);
}

TEST_CASE("solve_geodesic: sphere great-circle distances") {
  Model s2 = make_sphere2();
  Vec x = vec2(1.0, 0.0);
  Vec y = vec2(std::cos(1.0), std::sin(1.0));
  GeodesicSolution sol = solve_geodesic(s2, x, y, fast_opts(16, 800));
  REQUIRE(sol.distance == Catch::Approx(1.0).margin(1e-8));

  // a generic chart pair, checked against the embedded-sphere distance
  Vec u = vec2(0.3, -0.2), v = vec2(0.4, 0.5);
  double want = oracles::sphere_distance(u, v);
  double got = distance(s2, u, v, fast_opts(16, 800));
  REQUIRE(got == Catch::Approx(want).margin(1e-8));
}

TEST_CASE("solve_geodesic: hyperbolic distance against the disk formula") {
  Model h2 = make_hyperbolic2();
  Vec u = vec2(0.1, 0.2), v = vec2(-0.3, 0.4);
  double want = oracles::hyperbolic_distance(u, v);
  double got = distance(h2, u, v, fast_opts(16, 800));
  REQUIRE(got == Catch::Approx(want).margin(1e-8));
}

TEST_CASE("grushin: near-unit frame direction at x1 = 1") {
  Model g = make_grushin();
  double eps = 0.01;
  double d = distance(g, vec2(1.0, 0.0), vec2(1.0, eps), fast_opts(16, 600));
  REQUIRE(d == Catch::Approx(eps).epsilon(1e-3));
}

TEST_CASE("distance is symmetric and squares to the energy") {
  Model s2 = make_sphere2();
  Vec x = vec2(0.2, 0.1), y = vec2(0.9, -0.4);
  GeodesicSolution fwd = solve_geodesic(s2, x, y, fast_opts(12, 600));
  GeodesicSolution bwd = solve_geodesic(s2, y, x, fast_opts(12, 600));
  REQUIRE(fwd.distance == Catch::Approx(bwd.distance).margin(1e-8));
  REQUIRE(fwd.distance * fwd.distance == Catch::Approx(fwd.energy).margin(1e-10));
}

TEST_CASE("triangle inequality on random zoo triples") {
  CounterRng rng(17, 2);
  for (const char* name : {"euclidean2", "sphere2", "heisenberg"}) {
    Model m = make_model(name);
    for (int trial = 0; trial < 2; ++trial) {
      std::vector<Vec> pts;
      for (int k = 0; k < 3; ++k) {
        Vec x(m.d);
        for (int i = 0; i < m.d; ++i) x[i] = 0.8 * (rng.uniform() - 0.5);
        pts.push_back(x);
      }
      SolveOptions o = fast_opts(16, 500);
      double dab = distance(m, pts[0], pts[1], o);
      double dbc = distance(m, pts[1], pts[2], o);
      double dac = distance(m, pts[0], pts[2], o);
      INFO(name);
      REQUIRE(dac <= dab + dbc + 1e-6);
    }
  }
}

TEST_CASE("Newton converges superlinearly from a near start") {
  Model h = make_heisenberg();
  std::vector<double> log;
  SolveOptions o = fast_opts(1, 500);
  o.residual_log = &log;
  o.seed = 4;
  // the deterministic first start is the straight-chart momentum, which for
  // this pair lies within 0.1 of the true solution
  GeodesicSolution sol = solve_geodesic(h, vec3(0, 0, 0), vec3(0.9, 0.0, 0.05), o);
  REQUIRE(sol.residual <= o.tol_bvp);
  REQUIRE(log.size() >= 3);
  // ratio test on the tail: r_{k+1} / r_k should shrink
  for (size_t i = 2; i + 1 < log.size(); ++i) {
    if (log[i] < 1e-12) break;
    double q1 = log[i] / log[i - 1];
    double q2 = log[i + 1] / log[i];
    REQUIRE(q2 < 0.8 * q1 + 1e-12);
  }
}

TEST_CASE("classify: euclidean is regular and outside the cut locus") {
  Model e2 = make_euclidean(2);
  GeodesicSolution sol = solve_geodesic(e2, vec2(0, 0), vec2(1, 1), fast_opts());
  CutLocusReport rep = classify(e2, sol);
  REQUIRE(rep.detJ1 == Catch::Approx(1.0).margin(1e-10));
  REQUIRE_FALSE(rep.first_conjugate_time.has_value());
  REQUIRE(rep.regular);
  REQUIRE(rep.outside_cut_locus);
  REQUIRE(rep.symmetric_residual < 1e-10);
}

TEST_CASE("classify: sphere conjugate time from the Jacobi determinant") {
  Model s2 = make_sphere2();

  // length 2 < pi: no conjugate point in (0,1], smallest singular value of
  // J1 equals sin(2)/2 in the chart frame
  GeodesicSolution sol2 = solution_from_initial(s2, {vec2(1, 0), vec2(0, 2.0)}, 1000);
  CutLocusReport rep2 = classify(s2, sol2);
  REQUIRE_FALSE(rep2.first_conjugate_time.has_value());
  REQUIRE(rep2.min_singular_J1 == Catch::Approx(std::sin(2.0) / 2.0).margin(1e-4));

  // length 3.5 > pi: first conjugate time at pi/3.5
  GeodesicSolution sol35 = solution_from_initial(s2, {vec2(1, 0), vec2(0, 3.5)}, 2000);
  CutLocusReport rep35 = classify(s2, sol35);
  REQUIRE(rep35.first_conjugate_time.has_value());
  REQUIRE(*rep35.first_conjugate_time ==
          Catch::Approx(oracles::kPi / 3.5).margin(1e-4));
}

TEST_CASE("solve_geodesic reports NoConvergence for unreachable targets") {
  // grushin from the degenerate axis toward pure x2 displacement is still
  // reachable, but an absurd bound forces escape of every start
  Model e2 = make_euclidean(2);
  SolveOptions o = fast_opts(2, 50);
  o.escape_bound = 1e-3;
  REQUIRE_THROWS_AS(solve_geodesic(e2, vec2(0, 0), vec2(1, 0), o), NoConvergenceError);
}
