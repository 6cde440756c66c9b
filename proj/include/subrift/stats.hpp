#pragma once

#include <vector>

#include "subrift/core.hpp"

namespace subrift {

// Ensemble of vector-valued paths sampled on a fixed time grid, stored
// flat (sample-major) for cache-friendly batch statistics.
struct GridSamples {
  std::vector<double> times;
  int d = 0;
  int n = 0;
  std::vector<double> data;  // n * times.size() * d

  void init(std::vector<double> ts, int dim, int count) {
    times = std::move(ts);
    d = dim;
    n = count;
    data.assign(static_cast<size_t>(n) * times.size() * d, 0.0);
  }
  int grid_size() const { return static_cast<int>(times.size()); }
  Vec at(int i, int j) const {
    Vec v(d);
    const double* p = &data[(static_cast<size_t>(i) * times.size() + j) * d];
    for (int c = 0; c < d; ++c) v[c] = p[c];
    return v;
  }
  void set(int i, int j, const Vec& v) {
    double* p = &data[(static_cast<size_t>(i) * times.size() + j) * d];
    for (int c = 0; c < d; ++c) p[c] = v[c];
  }
};

struct CovEstimate {
  Mat cov;  // E[v_s v_t^T] - mean product, unbiased
  Mat se;   // entrywise standard error from batch means
  int n = 0;
};

// Sample cross-covariance of v at grid indices (js, jt) with entrywise
// standard errors from `batches` batch means.
inline CovEstimate pair_covariance(const GridSamples& gs, int js, int jt, int batches = 16) {
  int d = gs.d, n = gs.n;
  if (n < 2) throw InconclusiveError("pair_covariance: need at least 2 samples");
  CovEstimate est;
  est.n = n;
  Vec ms = Vec::Zero(d), mt = Vec::Zero(d);
  for (int i = 0; i < n; ++i) {
    ms += gs.at(i, js);
    mt += gs.at(i, jt);
  }
  ms /= n;
  mt /= n;
  est.cov = Mat::Zero(d, d);
  for (int i = 0; i < n; ++i)
    est.cov += (gs.at(i, js) - ms) * (gs.at(i, jt) - mt).transpose();
  est.cov /= (n - 1);

  int B = std::min(batches, n);
  std::vector<Mat> bm;
  for (int b = 0; b < B; ++b) {
    int lo = static_cast<int>(static_cast<long long>(b) * n / B);
    int hi = static_cast<int>(static_cast<long long>(b + 1) * n / B);
    if (hi - lo < 2) continue;
    Vec bs = Vec::Zero(d), bt = Vec::Zero(d);
    for (int i = lo; i < hi; ++i) {
      bs += gs.at(i, js);
      bt += gs.at(i, jt);
    }
    bs /= (hi - lo);
    bt /= (hi - lo);
    Mat c = Mat::Zero(d, d);
    for (int i = lo; i < hi; ++i)
      c += (gs.at(i, js) - bs) * (gs.at(i, jt) - bt).transpose();
    bm.push_back(c / (hi - lo - 1));
  }
  Mat mean = Mat::Zero(d, d);
  for (const Mat& m : bm) mean += m;
  mean /= bm.size();
  Mat var = Mat::Zero(d, d);
  for (const Mat& m : bm) var += (m - mean).cwiseProduct(m - mean);
  var /= (bm.size() - 1);
  est.se = (var / bm.size()).cwiseSqrt();
  return est;
}

// fraction of samples whose sup-norm over the grid exceeds the threshold,
// with a binomial standard error
struct TailEstimate {
  double fraction = 0.0;
  double se = 0.0;
  int n = 0;
};

inline TailEstimate sup_tail_fraction(const GridSamples& gs, double threshold,
                                      double scale = 1.0) {
  int hits = 0;
  for (int i = 0; i < gs.n; ++i) {
    double sup = 0.0;
    for (int j = 0; j < gs.grid_size(); ++j) sup = std::max(sup, gs.at(i, j).norm());
    if (sup * scale >= threshold) ++hits;
  }
  TailEstimate t;
  t.n = gs.n;
  t.fraction = static_cast<double>(hits) / gs.n;
  t.se = std::sqrt(std::max(t.fraction * (1.0 - t.fraction), 1.0 / gs.n) / gs.n);
  return t;
}

}  // namespace subrift
