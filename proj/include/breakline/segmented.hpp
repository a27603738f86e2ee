#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "breakline/bootstrap.hpp"
#include "breakline/core.hpp"
#include "breakline/loess.hpp"
#include "breakline/stats.hpp"

namespace breakline {

// Continuous three-segment line:
//   m(x) = b0 + b1 x + b2 (x - a1)+ + b3 (x - a2)+
struct SegmentedModel {
  std::array<double, 4> beta{};
  std::array<double, 2> alpha{};

  double operator()(double x) const {
    double v = beta[0] + beta[1] * x;
    if (x > alpha[0]) v += beta[2] * (x - alpha[0]);
    if (x > alpha[1]) v += beta[3] * (x - alpha[1]);
    return v;
  }

  // Slopes of the first, second and third segments.
  std::array<double, 3> slopes() const {
    return {beta[1], beta[1] + beta[2], beta[1] + beta[2] + beta[3]};
  }

  // d m / d(b0, b1, b2, b3, a1, a2), one-sided (right) in the breakpoints.
  std::array<double, 6> gradient(double x) const {
    const bool past1 = x > alpha[0], past2 = x > alpha[1];
    return {1.0,
            x,
            past1 ? x - alpha[0] : 0.0,
            past2 ? x - alpha[1] : 0.0,
            past1 ? -beta[2] : 0.0,
            past2 ? -beta[3] : 0.0};
  }
};

inline double eval_segmented(const SegmentedModel& m, double x) { return m(x); }

struct InferenceRow {
  std::string parameter;
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool significant = false;  // p < 0.05
};

struct SegmentedFit {
  SegmentedModel model;
  std::size_t n = 0;
  double rss = 0.0;
  double df = 0.0;
  double sigma2 = 0.0;
  // (J^T J)^-1 at the estimate; rows/cols of degenerate breakpoints are zero.
  Eigen::Matrix<double, 6, 6> jtj_inverse = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 6> cov = Eigen::Matrix<double, 6, 6>::Zero();
  std::array<bool, 2> degenerate_breakpoint{false, false};
  bool covariance_ok = true;
  bool polish_failed = false;
  double grid_rss = 0.0;  // best profile-grid objective before polishing
  double x_min = 0.0, x_max = 0.0;
  std::vector<std::string> warnings;
  // alpha1, alpha2, beta1, beta1+beta2, beta1+beta2+beta3
  std::vector<InferenceRow> rows;

  // Linear contrasts over theta = (b0, b1, b2, b3, a1, a2) for the five rows.
  static std::array<double, 6> contrast(std::size_t row) {
    switch (row) {
      case 0: return {0, 0, 0, 0, 1, 0};
      case 1: return {0, 0, 0, 0, 0, 1};
      case 2: return {0, 1, 0, 0, 0, 0};
      case 3: return {0, 1, 1, 0, 0, 0};
      default: return {0, 1, 1, 1, 0, 0};
    }
  }

  double standard_error(std::size_t row) const {
    if (row < 2 && degenerate_breakpoint[row]) return std::numeric_limits<double>::infinity();
    const auto c = contrast(row);
    double v = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) v += c[i] * cov(i, j) * c[j];
    return std::sqrt(std::max(v, 0.0));
  }

  double estimate(std::size_t row) const {
    const auto c = contrast(row);
    const std::array<double, 6> theta{model.beta[0], model.beta[1], model.beta[2],
                                      model.beta[3], model.alpha[0], model.alpha[1]};
    double v = 0.0;
    for (int i = 0; i < 6; ++i) v += c[i] * theta[i];
    return v;
  }

  // Two-sided t interval at `level` for one of the five inference rows. A
  // degenerate breakpoint spans the whole x-range.
  std::pair<double, double> interval(std::size_t row, double level) const {
    if (row < 2 && degenerate_breakpoint[row]) return {x_min, x_max};
    const double est = estimate(row);
    const double half = student_t_quantile(0.5 + level / 2.0, df) * standard_error(row);
    return {est - half, est + half};
  }
};

struct SegmentedOptions {
  std::size_t min_points_per_segment = 3;
  std::optional<SegmentedModel> init;
  // Seed extra polish starts from curvature peaks of a loess fit.
  bool loess_starts = true;
  LoessConfig loess;
  unsigned threads = 1;
  int max_polish_iterations = 200;
};

struct FixedBreakpointFit {
  std::array<double, 4> beta{};
  double rss = 0.0;
  bool ok = false;
};

namespace detail {

inline Eigen::MatrixXd segmented_design(std::span<const double> xs, double a1, double a2) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(xs.size()), 4);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d(r, 0) = 1.0;
    d(r, 1) = xs[i];
    d(r, 2) = std::max(xs[i] - a1, 0.0);
    d(r, 3) = std::max(xs[i] - a2, 0.0);
  }
  return d;
}

inline double rss_of(const SegmentedModel& m, std::span<const double> xs,
                     std::span<const double> ys) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - m(xs[i]);
    s += r * r;
  }
  return s;
}

// Number of points in each segment (x <= a1, a1 < x <= a2, x > a2).
inline std::array<std::size_t, 3> segment_counts(std::span<const double> xs, double a1, double a2) {
  auto c1 = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), a1) - xs.begin());
  auto c12 = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), a2) - xs.begin());
  return {c1, c12 - c1, xs.size() - c12};
}

inline bool breakpoints_admissible(std::span<const double> xs, double a1, double a2,
                                   std::size_t min_points) {
  if (!(a1 < a2) || !(a1 > xs.front()) || !(a2 < xs.back())) return false;
  const auto c = segment_counts(xs, a1, a2);
  return c[0] >= min_points && c[1] >= min_points && c[2] >= min_points;
}

template <typename F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Midpoints between consecutive distinct design values.
inline std::vector<double> breakpoint_candidates(std::span<const double> xs) {
  std::vector<double> out;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] != xs[i - 1]) out.push_back(0.5 * (xs[i] + xs[i - 1]));
  return out;
}

// Ordinary least squares for fixed breakpoints on (1, x, (x-a1)+, (x-a2)+).
inline FixedBreakpointFit fit_fixed_breakpoints(std::span<const double> xs,
                                                std::span<const double> ys, double a1, double a2) {
  FixedBreakpointFit out;
  const Eigen::MatrixXd d = detail::segmented_design(xs, a1, a2);
  const Eigen::Map<const Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
  if (qr.rank() < 4) return out;
  const Eigen::VectorXd b = qr.solve(y);
  for (int i = 0; i < 4; ++i) out.beta[static_cast<std::size_t>(i)] = b(i);
  out.rss = (y - d * b).squaredNorm();
  out.ok = true;
  return out;
}

namespace detail {

struct PolishResult {
  SegmentedModel model;
  double rss = 0.0;
  bool failed = false;
};

// Levenberg-Marquardt damped Gauss-Newton on the full parameter vector. Steps
// that would leave the admissible breakpoint region or raise the RSS are
// rejected, so the result never worsens the start.
inline PolishResult polish_segmented(std::span<const double> xs, std::span<const double> ys,
                                     SegmentedModel start, std::size_t min_points,
                                     int max_iterations) {
  PolishResult best{start, rss_of(start, xs, ys), false};
  const std::size_t n = xs.size();
  double lambda = 1e-3;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(n), 6);
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = best.model.gradient(xs[i]);
      for (int c = 0; c < 6; ++c) j(static_cast<Eigen::Index>(i), c) = g[static_cast<std::size_t>(c)];
      r(static_cast<Eigen::Index>(i)) = ys[i] - best.model(xs[i]);
    }
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd jtr = j.transpose() * r;
    if (!jtj.allFinite() || !jtr.allFinite()) {
      best.failed = true;
      return best;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (int c = 0; c < 6; ++c) a(c, c) += lambda * std::max(jtj(c, c), 1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      SegmentedModel trial = best.model;
      for (int c = 0; c < 4; ++c) trial.beta[static_cast<std::size_t>(c)] += step(c);
      trial.alpha[0] += step(4);
      trial.alpha[1] += step(5);
      if (!detail::breakpoints_admissible(xs, trial.alpha[0], trial.alpha[1], min_points)) {
        lambda *= 10.0;
        continue;
      }
      const double trial_rss = rss_of(trial, xs, ys);
      if (trial_rss < best.rss) {
        const double gain = best.rss - trial_rss;
        best.model = trial;
        best.rss = trial_rss;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (gain <= 1e-15 * (best.rss + 1e-300) || best.rss == 0.0) return best;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return best;
}

}  // namespace detail

inline void fill_inference_rows(SegmentedFit& fit);

// Covariance, breakpoint degeneracy flags and inference rows for a model that
// has already been fitted.
inline void compute_segmented_inference(SegmentedFit& fit, std::span<const double> xs) {
  const std::size_t n = xs.size();
  const auto& m = fit.model;
  fit.n = n;
  fit.df = static_cast<double>(n) - 6.0;
  fit.sigma2 = fit.rss / fit.df;
  fit.x_min = xs.front();
  fit.x_max = xs.back();

  const auto slopes = m.slopes();
  double slope_scale = 0.0;
  for (double s : slopes) slope_scale = std::max(slope_scale, std::abs(s));
  slope_scale += std::sqrt(std::max(fit.sigma2, 0.0)) / std::max(xs.back() - xs.front(), 1e-300);
  fit.degenerate_breakpoint = {std::abs(m.beta[2]) <= 1e-9 * slope_scale,
                               std::abs(m.beta[3]) <= 1e-9 * slope_scale};

  std::vector<int> keep{0, 1, 2, 3};
  if (!fit.degenerate_breakpoint[0]) keep.push_back(4);
  if (!fit.degenerate_breakpoint[1]) keep.push_back(5);
  const auto k = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd j(static_cast<Eigen::Index>(n), k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = m.gradient(xs[i]);
    for (Eigen::Index c = 0; c < k; ++c)
      j(static_cast<Eigen::Index>(i), c) = g[static_cast<std::size_t>(keep[static_cast<std::size_t>(c)])];
  }
  const Eigen::MatrixXd jtj = j.transpose() * j;
  Eigen::LLT<Eigen::MatrixXd> llt(jtj);
  fit.jtj_inverse.setZero();
  fit.covariance_ok = llt.info() == Eigen::Success;
  if (fit.covariance_ok) {
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
    fit.covariance_ok = inv.allFinite() && (inv.diagonal().array() > 0.0).all();
    for (Eigen::Index r = 0; r < k; ++r)
      for (Eigen::Index c = 0; c < k; ++c)
        fit.jtj_inverse(keep[static_cast<std::size_t>(r)], keep[static_cast<std::size_t>(c)]) = inv(r, c);
  }
  if (!fit.covariance_ok) fit.warnings.push_back("covariance matrix is not positive definite");
  for (int b = 0; b < 2; ++b)
    if (fit.degenerate_breakpoint[static_cast<std::size_t>(b)])
      fit.warnings.push_back("breakpoint alpha" + std::to_string(b + 1) +
                             " has no slope change; its standard error is infinite");
  fit.cov = fit.sigma2 * fit.jtj_inverse;
  fill_inference_rows(fit);
}

// Rebuilds the five inference rows (95% intervals) from model, cov and df.
inline void fill_inference_rows(SegmentedFit& fit) {
  static const char* names[] = {"alpha1", "alpha2", "beta1", "beta1+beta2", "beta1+beta2+beta3"};
  fit.rows.clear();
  for (std::size_t r = 0; r < 5; ++r) {
    InferenceRow row;
    row.parameter = names[r];
    row.estimate = fit.estimate(r);
    row.se = fit.covariance_ok ? fit.standard_error(r) : std::numeric_limits<double>::quiet_NaN();
    row.t = row.estimate / row.se;
    row.p = student_t_two_sided_p(row.t, fit.df);
    if (fit.covariance_ok || (r < 2 && fit.degenerate_breakpoint[r])) {
      auto ci = fit.interval(r, 0.95);
      row.ci_lower = ci.first;
      row.ci_upper = ci.second;
    } else {
      row.ci_lower = row.ci_upper = std::numeric_limits<double>::quiet_NaN();
    }
    row.significant = row.p < 0.05;
    fit.rows.push_back(row);
  }
}

// Two-breakpoint continuous piecewise linear least squares. The breakpoint pair
// is profiled over all admissible midpoint pairs with exact inner OLS, then the
// full parameter vector is polished by damped Gauss-Newton.
inline SegmentedFit fit_segmented(std::span<const double> xs, std::span<const double> ys,
                                  const SegmentedOptions& opt = {}) {
  const std::size_t n = xs.size();
  if (n != ys.size()) throw InputError("segmented fit: x and y differ in length");
  const std::size_t mp = std::max<std::size_t>(opt.min_points_per_segment, 1);
  if (n < 7 || n < 3 * mp) throw InputError("segmented fit needs more than 6 points and at least 3 x min points per segment");
  const auto cands = breakpoint_candidates(xs);
  if (cands.size() + 1 < 6) throw InputError("segmented fit needs at least 6 distinct x values");

  // Profile grid; row i fixes the first breakpoint at cands[i].
  struct Best {
    double rss = std::numeric_limits<double>::infinity();
    std::size_t i = 0, j = 0;
    std::array<double, 4> beta{};
  };
  std::vector<Best> row_best(cands.size());
  detail::parallel_for(cands.size(), opt.threads, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < cands.size(); ++j) {
      if (!detail::breakpoints_admissible(xs, cands[i], cands[j], mp)) continue;
      const auto f = fit_fixed_breakpoints(xs, ys, cands[i], cands[j]);
      if (f.ok && f.rss < row_best[i].rss) row_best[i] = {f.rss, i, j, f.beta};
    }
  });
  Best best;
  bool any_admissible = false;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    for (std::size_t j = i + 1; j < cands.size() && !any_admissible; ++j)
      any_admissible = detail::breakpoints_admissible(xs, cands[i], cands[j], mp);
    if (row_best[i].rss < best.rss) best = row_best[i];
  }
  if (!any_admissible)
    throw FitError("no breakpoint pair leaves " + std::to_string(mp) + " points in every segment");
  if (!std::isfinite(best.rss))
    throw FitError("inner least-squares fit is singular for every breakpoint pair");

  SegmentedModel grid_model{best.beta, {cands[best.i], cands[best.j]}};

  // Polish starts: grid optimum first, then user and loess-derived guesses.
  std::vector<SegmentedModel> starts{grid_model};
  auto add_start = [&](double a1, double a2) {
    if (a1 > a2) std::swap(a1, a2);
    if (!detail::breakpoints_admissible(xs, a1, a2, mp)) return;
    const auto f = fit_fixed_breakpoints(xs, ys, a1, a2);
    if (f.ok) starts.push_back({f.beta, {a1, a2}});
  };
  if (opt.init) add_start(opt.init->alpha[0], opt.init->alpha[1]);
  if (opt.loess_starts) {
    try {
      const auto lf = fit_loess(xs, ys, opt.loess);
      const auto peaks = loess_curvature_peaks(lf, 3);
      for (std::size_t a = 0; a < peaks.size(); ++a)
        for (std::size_t b = a + 1; b < peaks.size(); ++b) add_start(peaks[a], peaks[b]);
    } catch (const Error&) {
      // loess guesses are optional
    }
  }

  SegmentedFit fit;
  fit.grid_rss = best.rss;
  fit.model = grid_model;
  fit.rss = best.rss;
  bool all_failed = true;
  for (const auto& s : starts) {
    auto p = detail::polish_segmented(xs, ys, s, mp, opt.max_polish_iterations);
    if (!p.failed) all_failed = false;
    if (p.rss < fit.rss) {
      fit.model = p.model;
      fit.rss = p.rss;
    }
  }
  if (all_failed) {
    fit.polish_failed = true;
    fit.warnings.push_back("Gauss-Newton polish diverged; reporting the best grid point");
  }
  if (fit.model.alpha[0] > fit.model.alpha[1]) {
    std::swap(fit.model.alpha[0], fit.model.alpha[1]);
    std::swap(fit.model.beta[2], fit.model.beta[3]);
  }

  compute_segmented_inference(fit, xs);
  return fit;
}

inline SegmentedFit fit_segmented(const BivariateDataset& ds, const SegmentedOptions& opt = {}) {
  return fit_segmented(ds.xs(), ds.ys(), opt);
}

// Parametric prediction band:
//   yhat(x) -+ t_{(1+gamma)/2, df} sqrt(sigma2 (1 + g(x)^T (J^T J)^-1 g(x))).
inline PredictionBand plrm_parametric_band(const SegmentedFit& fit, std::span<const double> grid,
                                           double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma must lie in (0, 1)");
  if (!fit.covariance_ok) throw FitError("covariance not positive definite");
  PredictionBand band;
  band.method = "PLRM";
  band.gamma = gamma;
  const double tq = student_t_quantile((1.0 + gamma) / 2.0, fit.df);
  for (double x : grid) {
    const auto g = fit.model.gradient(x);
    double q = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        q += g[static_cast<std::size_t>(i)] * fit.jtj_inverse(i, j) * g[static_cast<std::size_t>(j)];
    const double half = tq * std::sqrt(fit.sigma2 * (1.0 + std::max(q, 0.0)));
    const double c = fit.model(x);
    band.x.push_back(x);
    band.center.push_back(c);
    band.lower.push_back(c - half);
    band.upper.push_back(c + half);
  }
  return band;
}

enum class PlrmBandMode { parametric, bootstrap };

// Mean fitter that refits the segmented model; used as the bootstrap slot.
inline MeanFitter segmented_mean_fitter(SegmentedOptions opt) {
  opt.threads = 1;
  opt.loess_starts = false;
  opt.init.reset();
  return [opt](std::span<const double> xs, std::span<const double> ys) {
    const auto f = fit_segmented(xs, ys, opt);
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f.model(xs[i]);
    return out;
  };
}

// Prediction band on the observed design. The parametric band falls back to the
// residual bootstrap (with a warning) when the covariance is unusable.
inline PredictionBand plrm_prediction_band(const SegmentedFit& fit, const BivariateDataset& ds,
                                           double gamma,
                                           PlrmBandMode mode = PlrmBandMode::parametric,
                                           const BandConfig& boot = {},
                                           const SegmentedOptions& opt = {}) {
  if (mode == PlrmBandMode::parametric && fit.covariance_ok)
    return plrm_parametric_band(fit, ds.xs(), gamma);
  BandConfig cfg = boot;
  cfg.gamma = gamma;
  auto band = bootstrap_band(ds, segmented_mean_fitter(opt), cfg, "PLRM");
  if (mode == PlrmBandMode::parametric)
    band.warnings.push_back("covariance not positive definite; bootstrap band used instead");
  return band;
}

}  // namespace breakline
