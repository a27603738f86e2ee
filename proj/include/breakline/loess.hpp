#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "breakline/core.hpp"

namespace breakline {

struct LoessConfig {
  double span = 0.75;  // fraction of points in each neighborhood, (0, 1]
  int degree = 2;      // 1 or 2
  int robust_iterations = 4;

  std::size_t neighborhood_size(std::size_t n) const {
    auto k = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
  }

  void validate(std::size_t n) const {
    if (!(span > 0.0 && span <= 1.0)) throw InputError("loess span must lie in (0, 1]");
    if (degree != 1 && degree != 2) throw InputError("loess degree must be 1 or 2");
    if (robust_iterations < 0) throw InputError("loess robust iterations must be non-negative");
    if (n < static_cast<std::size_t>(degree) + 2)
      throw InputError("loess needs at least degree + 2 points");
    if (neighborhood_size(n) < static_cast<std::size_t>(degree) + 1)
      throw InputError("loess span too small: neighborhood holds fewer than degree + 1 points");
  }
};

struct LoessFit {
  LoessConfig config;
  std::vector<double> xs;  // design the fit was computed on
  std::vector<double> ys;
  std::vector<double> fitted;
  std::vector<double> residuals;
  // Bisquare weights from the last robustness pass (all 1 without robustness).
  std::vector<double> robustness;
};

namespace detail {

inline double tricube(double u) {
  if (u >= 1.0) return 0.0;
  const double t = 1.0 - u * u * u;
  return t * t * t;
}

inline double bisquare(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  const double t = 1.0 - u * u;
  return t * t;
}

struct LoessWorkspace {
  std::vector<std::size_t> idx;
  std::vector<double> w;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

// Weighted local polynomial fit evaluated at x0. The k nearest design points
// form a contiguous window because `xs` is ascending.
inline double loess_local(std::span<const double> xs, std::span<const double> ys,
                          std::span<const double> robustness, const LoessConfig& cfg, double x0,
                          LoessWorkspace& ws) {
  const std::size_t n = xs.size();
  const std::size_t k = cfg.neighborhood_size(n);

  std::size_t lo = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), x0) - xs.begin());
  std::size_t hi = lo;
  while (hi - lo < k) {
    if (lo == 0) ++hi;
    else if (hi == n) --lo;
    else if (x0 - xs[lo - 1] <= xs[hi] - x0) --lo;
    else ++hi;
  }
  const double dmax = std::max(x0 - xs[lo], xs[hi - 1] - x0);
  while (lo > 0 && x0 - xs[lo - 1] <= dmax) --lo;
  while (hi < n && xs[hi] - x0 <= dmax) ++hi;

  if (dmax == 0.0) {
    double sw = 0.0, swy = 0.0, sy = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      sw += robustness[i];
      swy += robustness[i] * ys[i];
      sy += ys[i];
    }
    return sw > 0.0 ? swy / sw : sy / static_cast<double>(hi - lo);
  }

  const int cols = cfg.degree + 1;
  ws.idx.clear();
  ws.w.clear();
  for (std::size_t i = lo; i < hi; ++i) {
    const double wi = tricube(std::abs(xs[i] - x0) / dmax) * robustness[i];
    if (wi <= 0.0) continue;
    ws.idx.push_back(i);
    ws.w.push_back(wi);
  }

  std::size_t distinct = 0;
  for (std::size_t j = 0; j < ws.idx.size(); ++j)
    if (j == 0 || xs[ws.idx[j]] != xs[ws.idx[j - 1]]) ++distinct;
  if (distinct < static_cast<std::size_t>(cols))
    throw FitError("singular local fit at x = " + format_double(x0) +
                   ": positive weight on fewer than degree + 1 distinct x values");

  const auto m = static_cast<Eigen::Index>(ws.idx.size());
  ws.a.resize(m, cols);
  ws.b.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::size_t i = ws.idx[static_cast<std::size_t>(j)];
    const double sw = std::sqrt(ws.w[static_cast<std::size_t>(j)]);
    const double u = (xs[i] - x0) / dmax;
    double p = 1.0;
    for (int c = 0; c < cols; ++c) {
      ws.a(j, c) = sw * p;
      p *= u;
    }
    ws.b(j) = sw * ys[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ws.a);
  qr.setThreshold(1e-12);
  if (qr.rank() < cols)
    throw FitError("singular local fit at x = " + format_double(x0) + ": rank-deficient design");
  const Eigen::VectorXd coef = qr.solve(ws.b);
  return coef(0);
}

inline std::vector<double> loess_pass(std::span<const double> xs, std::span<const double> ys,
                                      std::span<const double> robustness, const LoessConfig& cfg,
                                      std::span<const double> targets) {
  std::vector<double> out(targets.size());
  LoessWorkspace ws;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    // Tied design points share a local fit.
    if (i > 0 && targets[i] == targets[i - 1]) {
      out[i] = out[i - 1];
      continue;
    }
    out[i] = loess_local(xs, ys, robustness, cfg, targets[i], ws);
  }
  return out;
}

inline double median_abs(std::span<const double> v) {
  std::vector<double> a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
  const auto mid = a.size() / 2;
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
  if (a.size() % 2 == 1) return a[mid];
  const double hi = a[mid];
  const double lo = *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Local polynomial smoother with tricube neighborhood weights and optional
// bisquare robustness passes. `xs` must be ascending.
inline LoessFit fit_loess(std::span<const double> xs, std::span<const double> ys,
                          const LoessConfig& cfg) {
  if (xs.size() != ys.size()) throw InputError("loess: x and y differ in length");
  cfg.validate(xs.size());
  const std::size_t n = xs.size();

  LoessFit fit;
  fit.config = cfg;
  fit.xs.assign(xs.begin(), xs.end());
  fit.ys.assign(ys.begin(), ys.end());
  fit.robustness.assign(n, 1.0);
  fit.fitted = detail::loess_pass(xs, ys, fit.robustness, cfg, xs);

  double yscale = 0.0;
  for (double y : ys) yscale = std::max(yscale, std::abs(y));

  for (int it = 0; it < cfg.robust_iterations; ++it) {
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i) res[i] = ys[i] - fit.fitted[i];
    const double s = detail::median_abs(res);
    if (s <= 1e-12 * (yscale + 1e-300)) break;
    for (std::size_t i = 0; i < n; ++i) fit.robustness[i] = detail::bisquare(res[i] / (6.0 * s));
    fit.fitted = detail::loess_pass(xs, ys, fit.robustness, cfg, xs);
  }

  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.residuals[i] = ys[i] - fit.fitted[i];
  return fit;
}

inline LoessFit fit_loess(const BivariateDataset& ds, const LoessConfig& cfg) {
  return fit_loess(ds.xs(), ds.ys(), cfg);
}

// Evaluates the fitted smoother on `grid`; points outside the design range are refused.
inline std::vector<double> predict_loess(const LoessFit& fit, std::span<const double> grid) {
  const double lo = fit.xs.front(), hi = fit.xs.back();
  for (double g : grid) {
    if (!(g >= lo && g <= hi))
      throw InputError("loess prediction at x = " + detail::format_double(g) +
                       " outside the data range [" + detail::format_double(lo) + ", " +
                       detail::format_double(hi) + "] (extrapolation refused)");
  }
  std::vector<double> out(grid.size());
  detail::LoessWorkspace ws;
  for (std::size_t i = 0; i < grid.size(); ++i)
    out[i] = detail::loess_local(fit.xs, fit.ys, fit.robustness, fit.config, grid[i], ws);
  return out;
}

// Candidate breakpoint locations: interior design points where the smoother's
// discrete second difference is largest in magnitude, strongest first.
inline std::vector<double> loess_curvature_peaks(const LoessFit& fit, std::size_t count) {
  struct Peak {
    double x;
    double curvature;
  };
  std::vector<double> ux, uy;
  for (std::size_t i = 0; i < fit.xs.size(); ++i) {
    if (i > 0 && fit.xs[i] == fit.xs[i - 1]) continue;
    ux.push_back(fit.xs[i]);
    uy.push_back(fit.fitted[i]);
  }
  std::vector<double> curv(ux.size(), 0.0);
  for (std::size_t i = 1; i + 1 < ux.size(); ++i) {
    const double s1 = (uy[i] - uy[i - 1]) / (ux[i] - ux[i - 1]);
    const double s2 = (uy[i + 1] - uy[i]) / (ux[i + 1] - ux[i]);
    curv[i] = std::abs(s2 - s1) / (0.5 * (ux[i + 1] - ux[i - 1]));
  }
  std::vector<Peak> peaks;
  for (std::size_t i = 1; i + 1 < ux.size(); ++i) {
    if (curv[i] >= curv[i - 1] && curv[i] >= curv[i + 1] && curv[i] > 0.0)
      peaks.push_back({ux[i], curv[i]});
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.curvature > b.curvature; });
  std::vector<double> out;
  for (const auto& p : peaks) {
    if (out.size() >= count) break;
    out.push_back(p.x);
  }
  return out;
}

}  // namespace breakline
