#pragma once

#include <atomic>
#include <cmath>
#include <vector>

#include "subrift/parallel.hpp"
#include "subrift/rng.hpp"
#include "subrift/shooting.hpp"
#include "subrift/stats.hpp"

namespace subrift {

struct SdeConfig {
  double eps = 0.1;          // diffusivity scale
  int steps = 400;           // Euler steps on [0,1]
  int n = 10000;             // sample count (or proposal count)
  uint64_t seed = 1;
  double rho = 0.5;          // bridge acceptance radius in units of sqrt(eps)
  int grid = 16;             // storage grid for paths
  int threads = 1;
  double escape_bound = 1e6;
  double max_drop_fraction = 1e-3;
  double r_kde_factor = 0.4;  // density ball radius r = factor * sqrt(eps)

  void validate() const {
    if (eps <= 0.0 || rho <= 0.0) throw ConfigError("SdeConfig: eps and rho must be positive");
    if (steps < 100) throw ConfigError("SdeConfig: need at least 100 Euler steps");
    if (n < 1) throw ConfigError("SdeConfig: need a positive sample count");
  }
};

namespace detail {

// frame values at x into the columns of X (d x m)
inline void frame_values(const Model& model, const Vec& x, Mat& X) {
  for (int l = 0; l < model.m; ++l) X.col(l) = model.frame[l].value(x);
}

struct TiltData {
  std::vector<Vec> h_cum;   // cumulative control on the Euler grid (m each)
  std::vector<Vec> gamma;   // base path on the storage grid
  Vec y;                    // base endpoint
};

inline TiltData prepare_tilt(const Model& model, const GeodesicSolution& sol,
                             const SdeConfig& cfg) {
  TiltData td;
  int N = cfg.steps;
  const BicharPath& path = sol.path;
  int Nf = path.steps();
  // cumulative control from the flow grid, then read off at Euler times
  std::vector<Vec> cum(Nf + 1, Vec::Zero(model.m));
  for (int i = 1; i <= Nf; ++i) {
    Vec r0(model.m), r1(model.m);
    for (int l = 0; l < model.m; ++l) {
      r0[l] = path.p[i - 1].dot(model.frame[l].value(path.x[i - 1]));
      r1[l] = path.p[i].dot(model.frame[l].value(path.x[i]));
    }
    cum[i] = cum[i - 1] + 0.5 * (r0 + r1) * (path.T / Nf);
  }
  td.h_cum.resize(N + 1);
  for (int k = 0; k <= N; ++k) {
    double t = static_cast<double>(k) / N;
    double s = t * Nf;
    int i = std::min(static_cast<int>(s), Nf - 1);
    double w = s - i;
    td.h_cum[k] = (1.0 - w) * cum[i] + w * cum[i + 1];
  }
  td.gamma.resize(cfg.grid + 1);
  for (int j = 0; j <= cfg.grid; ++j)
    td.gamma[j] = path.interp_x(static_cast<double>(j) / cfg.grid);
  td.y = path.x.back();
  return td;
}

}  // namespace detail

struct EndpointEnsemble {
  GridSamples endpoints;  // single grid time t = 1
  int dropped = 0;
};

// Euler-Maruyama sample of the diffusion dx = sqrt(eps) sum X_l dB^l
// + eps b(x) dt started at x, where b is the Ito-form drift. Endpoint law
// recorded; per-path counter substreams keep the ensemble reproducible.
inline EndpointEnsemble simulate_sde(const Model& model, const SdeConfig& cfg, const Vec& x) {
  cfg.validate();
  int N = cfg.steps, d = model.d, m = model.m;
  double dt = 1.0 / N;
  double sq = std::sqrt(cfg.eps * dt);
  EndpointEnsemble out;
  out.endpoints.init({1.0}, d, cfg.n);
  std::atomic<int> dropped{0};
  std::vector<uint8_t> ok(cfg.n, 0);
  parallel_for(cfg.n, cfg.threads, [&](int i) {
    CounterRng rng(cfg.seed, static_cast<uint64_t>(i));
    Vec z = x;
    Mat X(d, m);
    bool alive = true;
    for (int k = 0; k < N && alive; ++k) {
      detail::frame_values(model, z, X);
      Vec xi(m);
      for (int l = 0; l < m; ++l) xi[l] = rng.normal();
      z += sq * (X * xi) + cfg.eps * dt * ito_drift(model, z);
      if (!all_finite(z) || z.cwiseAbs().maxCoeff() > cfg.escape_bound) alive = false;
    }
    if (alive) {
      out.endpoints.set(i, 0, z);
      ok[i] = 1;
    } else {
      dropped.fetch_add(1);
    }
  });
  out.dropped = dropped.load();
  if (out.dropped > cfg.max_drop_fraction * cfg.n)
    throw FlowEscapeError("simulate_sde: more than the tolerated fraction of paths escaped");
  if (out.dropped > 0) {
    // compact the ensemble
    GridSamples kept;
    kept.init({1.0}, d, cfg.n - out.dropped);
    int j = 0;
    for (int i = 0; i < cfg.n; ++i)
      if (ok[i]) kept.set(j++, 0, out.endpoints.at(i, 0));
    out.endpoints = std::move(kept);
  }
  return out;
}

// Tilted diffusion along the solved geodesic:
//   d gamma^eps = sum X_l dh^l + sqrt(eps) sum X_l dB^l + eps b dt.
// Returns the rescaled deviations (gamma^eps_t - gamma_t)/sqrt(eps) on the
// storage grid (the identity chart map is the rescaling frame).
inline GridSamples simulate_tilted(const Model& model, const GeodesicSolution& sol,
                                   const SdeConfig& cfg) {
  cfg.validate();
  int N = cfg.steps, d = model.d, m = model.m, G = cfg.grid;
  if (N % G != 0) throw ConfigError("simulate_tilted: Euler grid must refine the storage grid");
  int stride = N / G;
  double dt = 1.0 / N;
  double sq = std::sqrt(cfg.eps * dt);
  double rooteps = std::sqrt(cfg.eps);
  detail::TiltData td = detail::prepare_tilt(model, sol, cfg);

  GridSamples gs;
  std::vector<double> ts(G + 1);
  for (int j = 0; j <= G; ++j) ts[j] = static_cast<double>(j) / G;
  gs.init(ts, d, cfg.n);
  std::atomic<int> dropped{0};
  std::vector<uint8_t> ok(cfg.n, 0);
  parallel_for(cfg.n, cfg.threads, [&](int i) {
    CounterRng rng(cfg.seed, static_cast<uint64_t>(i));
    Vec z = sol.lambda0.x;
    Mat X(d, m);
    gs.set(i, 0, Vec::Zero(d));
    bool alive = true;
    for (int k = 0; k < N; ++k) {
      detail::frame_values(model, z, X);
      Vec xi(m);
      for (int l = 0; l < m; ++l) xi[l] = rng.normal();
      Vec dh = td.h_cum[k + 1] - td.h_cum[k];
      z += X * dh + sq * (X * xi) + cfg.eps * dt * ito_drift(model, z);
      if (!all_finite(z) || z.cwiseAbs().maxCoeff() > cfg.escape_bound) {
        alive = false;
        break;
      }
      if ((k + 1) % stride == 0) {
        int j = (k + 1) / stride;
        gs.set(i, j, Vec((z - td.gamma[j]) / rooteps));
      }
    }
    ok[i] = alive ? 1 : 0;
    if (!alive) dropped.fetch_add(1);
  });
  if (dropped.load() > cfg.max_drop_fraction * cfg.n)
    throw FlowEscapeError("simulate_tilted: more than the tolerated fraction of paths escaped");
  if (dropped.load() > 0) {
    GridSamples kept;
    kept.init(gs.times, d, cfg.n - dropped.load());
    int j = 0;
    for (int i = 0; i < cfg.n; ++i) {
      if (!ok[i]) continue;
      for (int g = 0; g <= G; ++g) kept.set(j, g, gs.at(i, g));
      ++j;
    }
    gs = std::move(kept);
  }
  return gs;
}

struct BridgeEnsemble {
  GridSamples samples;  // rescaled accepted paths on the storage grid
  double acceptance_rate = 0.0;
  int proposals = 0;
  double eps = 0.0;
  double rho = 0.0;
};

// Endpoint-conditioned ensemble by acceptance window: tilted proposals kept
// when |gamma^eps_1 - y| <= rho sqrt(eps). The window leaves an O(rho) bias
// in the conditional law, which shrinks with the rho sweep.
inline BridgeEnsemble bridge_ensemble(const Model& model, const GeodesicSolution& sol,
                                      const SdeConfig& cfg) {
  GridSamples all = simulate_tilted(model, sol, cfg);
  BridgeEnsemble be;
  be.proposals = cfg.n;
  be.eps = cfg.eps;
  be.rho = cfg.rho;
  int G = cfg.grid;
  std::vector<int> keep;
  for (int i = 0; i < all.n; ++i)
    if (all.at(i, G).norm() <= cfg.rho) keep.push_back(i);
  if (keep.empty()) throw ZeroAcceptanceError("bridge_ensemble: no proposal hit the window");
  be.acceptance_rate = static_cast<double>(keep.size()) / cfg.n;
  be.samples.init(all.times, all.d, static_cast<int>(keep.size()));
  for (size_t j = 0; j < keep.size(); ++j)
    for (int g = 0; g <= G; ++g) be.samples.set(static_cast<int>(j), g, all.at(keep[j], g));
  return be;
}

// Exact bridge for the flat model: omega_t = x + t(y-x) + sqrt(eps) z_t with
// z a standard Brownian bridge, so the rescaled deviation is exactly z.
inline BridgeEnsemble bridge_exact_euclidean(int d, const SdeConfig& cfg) {
  cfg.validate();
  int G = cfg.grid;
  BridgeEnsemble be;
  be.proposals = cfg.n;
  be.acceptance_rate = 1.0;
  be.eps = cfg.eps;
  be.rho = 0.0;
  std::vector<double> ts(G + 1);
  for (int j = 0; j <= G; ++j) ts[j] = static_cast<double>(j) / G;
  be.samples.init(ts, d, cfg.n);
  double sqdt = std::sqrt(1.0 / G);
  parallel_for(cfg.n, cfg.threads, [&](int i) {
    CounterRng rng(cfg.seed, static_cast<uint64_t>(i));
    std::vector<Vec> b(G + 1);
    b[0] = Vec::Zero(d);
    for (int k = 1; k <= G; ++k) {
      Vec xi(d);
      for (int c = 0; c < d; ++c) xi[c] = rng.normal();
      b[k] = b[k - 1] + sqdt * xi;
    }
    for (int k = 0; k <= G; ++k) {
      double t = static_cast<double>(k) / G;
      be.samples.set(i, k, Vec(b[k] - t * b[G]));
    }
  });
  return be;
}

// Unbiased pair covariance of a bridge ensemble with batch-mean standard
// errors. Requires at least 100 accepted samples.
inline CovEstimate empirical_covariance(const BridgeEnsemble& be, double s, double t) {
  if (be.samples.n < 100)
    throw InconclusiveError("empirical_covariance: fewer than 100 accepted samples");
  int G = be.samples.grid_size() - 1;
  int js = static_cast<int>(std::llround(s * G));
  int jt = static_cast<int>(std::llround(t * G));
  return pair_covariance(be.samples, js, jt);
}

struct VaradhanRow {
  double eps = 0.0;
  double p_hat = 0.0;
  double eps_log_p = 0.0;
  double r_kde = 0.0;
  long hits = 0;
  bool inconclusive = false;
};

// Small-time density table: the tilted process with its change-of-measure
// weight estimates p(eps, x, y) by weighted counting in a shrinking chart
// ball around y (density taken w.r.t. Lebesgue measure in the chart).
inline std::vector<VaradhanRow> varadhan_estimate(const Model& model,
                                                  const GeodesicSolution& sol,
                                                  const std::vector<double>& eps_list,
                                                  const SdeConfig& base_cfg) {
  std::vector<VaradhanRow> table;
  int d = model.d, m = model.m;
  for (double eps : eps_list) {
    SdeConfig cfg = base_cfg;
    cfg.eps = eps;
    cfg.validate();
    int N = cfg.steps;
    double dt = 1.0 / N;
    double sq = std::sqrt(eps * dt);
    detail::TiltData td = detail::prepare_tilt(model, sol, cfg);
    double r = cfg.r_kde_factor * std::sqrt(eps);
    double ball = std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d + 1.0) * std::pow(r, d);
    double hnorm2 = 0.0;  // discrete Cameron-Martin norm of the tilt
    for (int k = 0; k < N; ++k)
      hnorm2 += (td.h_cum[k + 1] - td.h_cum[k]).squaredNorm() / dt;

    std::vector<double> wsum_part(cfg.n, 0.0);
    std::atomic<long> hits{0};
    parallel_for(cfg.n, cfg.threads, [&](int i) {
      CounterRng rng(cfg.seed, static_cast<uint64_t>(i));
      Vec z = sol.lambda0.x;
      Mat X(d, m);
      double stoch = 0.0;  // int <hdot, dB>
      bool alive = true;
      for (int k = 0; k < N && alive; ++k) {
        detail::frame_values(model, z, X);
        Vec xi(m);
        for (int l = 0; l < m; ++l) xi[l] = rng.normal();
        Vec dh = td.h_cum[k + 1] - td.h_cum[k];
        stoch += dh.dot(xi) * std::sqrt(dt) / dt;  // hdot . dB
        z += X * dh + sq * (X * xi) + eps * dt * ito_drift(model, z);
        if (!all_finite(z) || z.cwiseAbs().maxCoeff() > cfg.escape_bound) alive = false;
      }
      if (alive && (z - td.y).norm() <= r) {
        double logw = -stoch / std::sqrt(eps) - hnorm2 / (2.0 * eps);
        wsum_part[i] = std::exp(logw);
        hits.fetch_add(1);
      }
    });
    double wsum = 0.0;
    for (double w : wsum_part) wsum += w;
    VaradhanRow row;
    row.eps = eps;
    row.r_kde = r;
    row.hits = hits.load();
    if (row.hits == 0) {
      row.inconclusive = true;
      row.p_hat = 0.0;
      row.eps_log_p = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.p_hat = wsum / (static_cast<double>(cfg.n) * ball);
      row.eps_log_p = eps * std::log(row.p_hat);
    }
    table.push_back(row);
  }
  return table;
}

struct ConcentrationRow {
  double eps = 0.0;
  double tail_fraction = 0.0;
  double se = 0.0;
  int n = 0;
};

// Tail fraction of the chart sup-distance sup_t |omega_t - gamma_t| =
// sqrt(eps) sup_t |vtilde_t| exceeding the threshold r, per ensemble.
inline std::vector<ConcentrationRow> concentration_stat(
    const std::vector<BridgeEnsemble>& ensembles, double r) {
  if (ensembles.size() < 3)
    throw InconclusiveError("concentration_stat: need ensembles at three scales");
  std::vector<ConcentrationRow> rows;
  for (const BridgeEnsemble& be : ensembles) {
    if (be.samples.n < 100)
      throw InconclusiveError("concentration_stat: ensemble too small");
    TailEstimate te = sup_tail_fraction(be.samples, r, std::sqrt(be.eps));
    rows.push_back({be.eps, te.fraction, te.se, te.n});
  }
  return rows;
}

}  // namespace subrift
