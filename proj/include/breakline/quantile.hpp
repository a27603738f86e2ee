#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "breakline/core.hpp"
#include "breakline/segmented.hpp"

namespace breakline {

// Check (pinball) loss rho_tau(u) = u (tau - 1[u < 0]).
inline double check_loss(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

inline double check_loss_sum(std::span<const double> residuals, double tau) {
  double s = 0.0;
  for (double r : residuals) s += check_loss(r, tau);
  return s;
}

struct QuantileLinearFit {
  Eigen::VectorXd coef;
  double objective = 0.0;
  // Observations interpolated by the returned vertex (one per coefficient).
  std::vector<std::size_t> basis;
  std::size_t pivots = 0;
};

struct QuantileSolverOptions {
  // Dantzig pricing for this many pivots per phase, then Bland's rule.
  std::size_t dantzig_budget = 0;  // 0: 20 (n + p) + 100
  std::size_t hard_limit = 0;      // 0: 2000 (n + p) + 10000
};

namespace detail {

// Bounded primal simplex on the dual of the check-loss problem:
//   maximize  y^T a   subject to  X^T a = (1 - tau) X^T 1,  0 <= a <= 1.
// The simplex multipliers of an optimal basis are the quantile coefficients;
// the basic observations are the ones the fit interpolates.
class QuantileSimplex {
 public:
  QuantileSimplex(const Eigen::MatrixXd& x, std::span<const double> y, double tau,
                  const QuantileSolverOptions& opt)
      : x_(x), y_(y), tau_(tau), n_(static_cast<std::size_t>(x.rows())),
        p_(static_cast<std::size_t>(x.cols())) {
    rhs_ = (1.0 - tau) * x_.colwise().sum().transpose();
    double ymax = 0.0;
    for (double v : y_) ymax = std::max(ymax, std::abs(v));
    cost_tol_ = 1e-11 * (ymax + 1.0);
    dantzig_budget_ = opt.dantzig_budget ? opt.dantzig_budget : 20 * (n_ + p_) + 100;
    hard_limit_ = opt.hard_limit ? opt.hard_limit : 2000 * (n_ + p_) + 10000;
  }

  QuantileLinearFit solve(std::span<const std::size_t> warm_basis) {
    if (!warm_basis.empty() && try_warm_start(warm_basis)) {
      run_phase(false);
    } else {
      cold_start();
      run_phase(true);
      leave_phase_one();
      run_phase(false);
    }

    QuantileLinearFit out;
    out.coef = multipliers(false);
    out.pivots = pivots_;
    for (auto b : basis_) out.basis.push_back(b);
    std::sort(out.basis.begin(), out.basis.end());
    const Eigen::Map<const Eigen::VectorXd> yv(y_.data(), static_cast<Eigen::Index>(n_));
    const Eigen::VectorXd r = yv - x_ * out.coef;
    out.objective = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) out.objective += check_loss(r(i), tau_);
    return out;
  }

 private:
  bool is_artificial(std::size_t j) const { return j >= n_; }

  Eigen::VectorXd column(std::size_t j) const {
    if (!is_artificial(j)) return x_.row(static_cast<Eigen::Index>(j)).transpose();
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_));
    e(static_cast<Eigen::Index>(j - n_)) = art_sign_[j - n_];
    return e;
  }

  double cost(std::size_t j, bool phase_one) const {
    if (phase_one) return is_artificial(j) ? -1.0 : 0.0;
    return is_artificial(j) ? 0.0 : y_[j];
  }

  double upper(std::size_t j) const {
    return is_artificial(j) ? std::numeric_limits<double>::infinity() : 1.0;
  }

  void factor() {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
    for (std::size_t k = 0; k < p_; ++k) m.col(static_cast<Eigen::Index>(k)) = column(basis_[k]);
    lu_.compute(m);
  }

  Eigen::VectorXd multipliers(bool phase_one) const {
    Eigen::VectorXd cb(static_cast<Eigen::Index>(p_));
    for (std::size_t k = 0; k < p_; ++k) cb(static_cast<Eigen::Index>(k)) = cost(basis_[k], phase_one);
    return lu_.transpose().solve(cb);
  }

  void cold_start() {
    value_.assign(n_ + p_, 0.0);
    at_upper_.assign(n_ + p_, false);
    in_basis_.assign(n_ + p_, false);
    art_sign_.assign(p_, 1.0);
    basis_.clear();
    for (std::size_t k = 0; k < p_; ++k) {
      const double r = rhs_(static_cast<Eigen::Index>(k));
      art_sign_[k] = r < 0.0 ? -1.0 : 1.0;
      value_[n_ + k] = std::abs(r);
      basis_.push_back(n_ + k);
      in_basis_[n_ + k] = true;
    }
    factor();
  }

  bool try_warm_start(std::span<const std::size_t> warm) {
    if (warm.size() != p_) return false;
    art_sign_.assign(p_, 1.0);
    basis_.assign(warm.begin(), warm.end());
    for (auto b : basis_)
      if (b >= n_) return false;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
    for (std::size_t k = 0; k < p_; ++k) m.col(static_cast<Eigen::Index>(k)) = column(basis_[k]);
    Eigen::FullPivLU<Eigen::MatrixXd> check(m);
    if (check.rank() < static_cast<Eigen::Index>(p_)) return false;
    factor();

    value_.assign(n_ + p_, 0.0);
    at_upper_.assign(n_ + p_, false);
    in_basis_.assign(n_ + p_, false);
    for (auto b : basis_) in_basis_[b] = true;
    const Eigen::VectorXd pi = multipliers(false);
    Eigen::VectorXd rest = rhs_;
    for (std::size_t j = 0; j < n_; ++j) {
      if (in_basis_[j]) continue;
      const double r = y_[j] - x_.row(static_cast<Eigen::Index>(j)).dot(pi);
      if (r > 0.0) {
        value_[j] = 1.0;
        at_upper_[j] = true;
        rest -= x_.row(static_cast<Eigen::Index>(j)).transpose();
      }
    }
    const Eigen::VectorXd ab = lu_.solve(rest);
    for (std::size_t k = 0; k < p_; ++k) value_[basis_[k]] = ab(static_cast<Eigen::Index>(k));
    // Nonbasic bounds follow the residual signs, so the basis is already
    // optimal-signed; only the basic weights may be out of [0, 1].
    return dual_phase();
  }

  void recompute_basic_values() {
    Eigen::VectorXd rest = rhs_;
    for (std::size_t j = 0; j < n_; ++j)
      if (!in_basis_[j] && at_upper_[j]) rest -= x_.row(static_cast<Eigen::Index>(j)).transpose();
    const Eigen::VectorXd ab = lu_.solve(rest);
    for (std::size_t k = 0; k < p_; ++k) value_[basis_[k]] = ab(static_cast<Eigen::Index>(k));
  }

  // Bounded dual simplex: drives out-of-bound basic weights to a bound while
  // keeping every reduced cost correctly signed. Returns false when it cannot
  // make progress (the caller then starts cold).
  bool dual_phase() {
    constexpr double feas_tol = 1e-10;
    std::size_t phase_pivots = 0;
    for (;;) {
      if (pivots_ >= hard_limit_) return false;
      const bool bland = phase_pivots >= dantzig_budget_;
      std::optional<std::size_t> row;
      double worst = feas_tol;
      for (std::size_t k = 0; k < p_; ++k) {
        const double v = value_[basis_[k]];
        const double viol = v < 0.0 ? -v : v - 1.0;
        if (viol > worst && (!bland || !row || basis_[k] < basis_[*row])) {
          if (!bland) worst = viol;
          row = k;
        }
      }
      if (!row) {
        for (auto b : basis_) value_[b] = std::clamp(value_[b], 0.0, 1.0);
        return true;
      }
      const bool to_upper = value_[basis_[*row]] > 1.0;
      Eigen::VectorXd er = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_));
      er(static_cast<Eigen::Index>(*row)) = 1.0;
      const Eigen::VectorXd rho = lu_.transpose().solve(er);
      const Eigen::VectorXd pi = multipliers(false);

      std::optional<std::size_t> entering;
      double best_ratio = std::numeric_limits<double>::infinity();
      double best_alpha = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        if (in_basis_[j]) continue;
        const auto xj = x_.row(static_cast<Eigen::Index>(j));
        const double alpha = xj.dot(rho);
        const bool eligible = to_upper ? (at_upper_[j] ? alpha < -1e-12 : alpha > 1e-12)
                                       : (at_upper_[j] ? alpha > 1e-12 : alpha < -1e-12);
        if (!eligible) continue;
        const double d = y_[j] - xj.dot(pi);
        const double ratio = std::abs(d) / std::abs(alpha);
        bool take;
        if (ratio < best_ratio - 1e-15)
          take = true;
        else if (ratio <= best_ratio + 1e-15)
          take = bland ? false : std::abs(alpha) > best_alpha;
        else
          take = false;
        if (take) {
          best_ratio = ratio;
          best_alpha = std::abs(alpha);
          entering = j;
        }
      }
      if (!entering) return false;

      const std::size_t out = basis_[*row];
      in_basis_[out] = false;
      at_upper_[out] = to_upper;
      value_[out] = to_upper ? 1.0 : 0.0;
      basis_[*row] = *entering;
      in_basis_[*entering] = true;
      at_upper_[*entering] = false;
      factor();
      recompute_basic_values();
      ++pivots_;
      ++phase_pivots;
    }
  }

  // One simplex phase; returns when no improving nonbasic column remains.
  void run_phase(bool phase_one) {
    std::size_t phase_pivots = 0;
    for (;;) {
      if (pivots_ >= hard_limit_)
        throw FitError("quantile LP iteration limit reached (possible cycling)");
      const bool bland = phase_pivots >= dantzig_budget_;
      const Eigen::VectorXd pi = multipliers(phase_one);

      std::size_t entering = n_ + p_;
      double best = 0.0;
      double entering_d = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        if (in_basis_[j]) continue;
        const double d = cost(j, phase_one) - x_.row(static_cast<Eigen::Index>(j)).dot(pi);
        const bool eligible = at_upper_[j] ? d < -cost_tol_ : d > cost_tol_;
        if (!eligible) continue;
        if (bland) {
          entering = j;
          entering_d = d;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          entering = j;
          entering_d = d;
        }
      }
      if (entering == n_ + p_) return;

      const double dir = entering_d > 0.0 ? 1.0 : -1.0;
      const Eigen::VectorXd w = lu_.solve(column(entering));
      double step = upper(entering);
      std::optional<std::size_t> leave;
      bool leave_to_upper = false;
      double leave_mag = 0.0;
      for (std::size_t k = 0; k < p_; ++k) {
        const double wk = dir * w(static_cast<Eigen::Index>(k));
        const std::size_t var = basis_[k];
        double limit;
        bool to_upper;
        if (wk > 1e-12) {
          limit = std::max(value_[var], 0.0) / wk;
          to_upper = false;
        } else if (wk < -1e-12 && std::isfinite(upper(var))) {
          limit = std::max(upper(var) - value_[var], 0.0) / -wk;
          to_upper = true;
        } else {
          continue;
        }
        bool take = false;
        if (limit < step - 1e-15) {
          take = true;
        } else if (leave && limit <= step + 1e-15) {
          // Ratio tie.
          take = bland ? basis_[k] < basis_[*leave] : std::abs(wk) > leave_mag;
        }
        if (take) {
          step = std::min(step, limit);
          leave = k;
          leave_to_upper = to_upper;
          leave_mag = std::abs(wk);
        }
      }

      for (std::size_t k = 0; k < p_; ++k)
        value_[basis_[k]] -= dir * step * w(static_cast<Eigen::Index>(k));
      value_[entering] += dir * step;
      ++pivots_;
      ++phase_pivots;

      if (!leave) {
        // Bound flip of the entering variable.
        at_upper_[entering] = !at_upper_[entering];
        value_[entering] = at_upper_[entering] ? 1.0 : 0.0;
        continue;
      }
      const std::size_t out = basis_[*leave];
      in_basis_[out] = false;
      at_upper_[out] = leave_to_upper;
      value_[out] = leave_to_upper ? upper(out) : 0.0;
      basis_[*leave] = entering;
      in_basis_[entering] = true;
      at_upper_[entering] = false;
      for (auto b : basis_)
        if (!is_artificial(b)) value_[b] = std::clamp(value_[b], 0.0, 1.0);
      factor();
    }
  }

  // Checks feasibility and pivots any artificial still basic (at zero) out.
  void leave_phase_one() {
    double infeasibility = 0.0;
    for (std::size_t k = 0; k < p_; ++k) infeasibility += value_[n_ + k];
    double scale = 1.0;
    for (Eigen::Index k = 0; k < rhs_.size(); ++k) scale = std::max(scale, std::abs(rhs_(k)));
    if (infeasibility > 1e-8 * scale)
      throw FitError("quantile LP phase one failed to reach feasibility");

    for (std::size_t pos = 0; pos < p_; ++pos) {
      if (!is_artificial(basis_[pos])) continue;
      std::optional<std::size_t> replacement;
      double best = 1e-9;
      for (std::size_t j = 0; j < n_; ++j) {
        if (in_basis_[j]) continue;
        const Eigen::VectorXd w = lu_.solve(column(j));
        const double mag = std::abs(w(static_cast<Eigen::Index>(pos)));
        if (mag > best) {
          best = mag;
          replacement = j;
        }
      }
      if (!replacement) throw FitError("quantile LP design is rank deficient");
      const std::size_t out = basis_[pos];
      in_basis_[out] = false;
      value_[out] = 0.0;
      basis_[pos] = *replacement;
      in_basis_[*replacement] = true;
      at_upper_[*replacement] = false;
      factor();
      // Degenerate pivot: every value is unchanged, re-solve to drop round-off.
      Eigen::VectorXd rest = rhs_;
      for (std::size_t j = 0; j < n_; ++j)
        if (!in_basis_[j] && at_upper_[j]) rest -= x_.row(static_cast<Eigen::Index>(j)).transpose();
      const Eigen::VectorXd ab = lu_.solve(rest);
      for (std::size_t k = 0; k < p_; ++k) {
        const double v = ab(static_cast<Eigen::Index>(k));
        value_[basis_[k]] = is_artificial(basis_[k]) ? std::max(v, 0.0) : std::clamp(v, 0.0, 1.0);
      }
    }
    for (std::size_t k = 0; k < p_; ++k) value_[n_ + k] = 0.0;
  }

  const Eigen::MatrixXd& x_;
  std::span<const double> y_;
  double tau_;
  std::size_t n_, p_;
  Eigen::VectorXd rhs_;
  double cost_tol_ = 1e-11;
  std::size_t dantzig_budget_ = 0, hard_limit_ = 0;
  std::size_t pivots_ = 0;
  std::vector<std::size_t> basis_;
  std::vector<double> value_;
  std::vector<bool> at_upper_;
  std::vector<bool> in_basis_;
  std::vector<double> art_sign_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

}  // namespace detail

// Exact minimizer of sum rho_tau(y - X b) by linear programming. Returns an
// optimal vertex; when the optimum is not unique the vertex depends on pivot
// order. `warm_basis` (p observation indices) may shorten the solve.
inline QuantileLinearFit fit_quantile_linear(const Eigen::MatrixXd& design,
                                             std::span<const double> ys, double tau,
                                             std::span<const std::size_t> warm_basis = {},
                                             const QuantileSolverOptions& opt = {}) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("tau must lie in (0, 1)");
  if (static_cast<std::size_t>(design.rows()) != ys.size())
    throw InputError("design rows differ from response length");
  if (design.rows() < design.cols() || design.cols() == 0)
    throw FitError("quantile fit needs at least as many observations as coefficients");
  if (warm_basis.empty()) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols()) throw FitError("quantile design matrix is rank deficient");
  }
  detail::QuantileSimplex lp(design, ys, tau, opt);
  return lp.solve(warm_basis);
}

struct QuantileOptions {
  std::size_t min_points_per_segment = 3;
  // Breakpoints of a least-squares fit; the pair nearest to it seeds the search.
  std::optional<SegmentedModel> init;
  bool refine = true;
  std::size_t refine_steps = 8;  // sub-grid points per candidate interval
  unsigned threads = 1;
};

struct QuantileSegmentedFit {
  enum class Status { optimal, grid_fallback };

  double tau = 0.5;
  SegmentedModel model;
  double objective = 0.0;
  double grid_objective = 0.0;  // before refinement
  Status status = Status::optimal;
  // Residual signs at the returned fit (|r| <= tolerance counts as zero).
  std::size_t negative = 0, zero = 0, positive = 0;
};

namespace detail {

inline Eigen::MatrixXd quantile_segmented_design(std::span<const double> xs, double a1, double a2) {
  return segmented_design(xs, a1, a2);
}

struct PairSolve {
  double objective = std::numeric_limits<double>::infinity();
  double a1 = 0.0, a2 = 0.0;
  std::array<double, 4> beta{};
  std::vector<std::size_t> basis;
};

inline std::optional<PairSolve> solve_pair(std::span<const double> xs, std::span<const double> ys,
                                           double tau, double a1, double a2,
                                           std::span<const std::size_t> warm) {
  const Eigen::MatrixXd d = quantile_segmented_design(xs, a1, a2);
  try {
    auto f = fit_quantile_linear(d, ys, tau, warm);
    PairSolve s;
    s.objective = f.objective;
    s.a1 = a1;
    s.a2 = a2;
    for (int i = 0; i < 4; ++i) s.beta[static_cast<std::size_t>(i)] = f.coef(i);
    s.basis = std::move(f.basis);
    return s;
  } catch (const FitError&) {
    if (warm.empty()) return std::nullopt;
    // A stale warm basis can be singular for this design; retry cold.
    return solve_pair(xs, ys, tau, a1, a2, {});
  }
}

}  // namespace detail

// Two-breakpoint piecewise linear quantile regression. Breakpoints are profiled
// over the same midpoint grid as the least-squares fit, each pair solved exactly
// by the check-loss LP, then optionally refined on a finer local sub-grid.
inline QuantileSegmentedFit fit_segmented_quantile(std::span<const double> xs,
                                                   std::span<const double> ys, double tau,
                                                   const QuantileOptions& opt = {}) {
  const std::size_t n = xs.size();
  if (n != ys.size()) throw InputError("quantile fit: x and y differ in length");
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("tau must lie in (0, 1)");
  if (static_cast<double>(n) * std::min(tau, 1.0 - tau) < 1.0)
    throw InputError("tau = " + detail::format_double(tau) + " is too extreme for n = " +
                     std::to_string(n) + ": fewer than one residual expected on one side");
  const std::size_t mp = std::max<std::size_t>(opt.min_points_per_segment, 1);
  if (n < 7 || n < 3 * mp) throw InputError("quantile fit needs more than 6 points and at least 3 x min points per segment");
  const auto cands = breakpoint_candidates(xs);
  if (cands.size() + 1 < 6) throw InputError("quantile fit needs at least 6 distinct x values");

  // Seed basis from the admissible pair nearest the least-squares breakpoints.
  std::vector<std::size_t> seed_basis;
  {
    double bestd = std::numeric_limits<double>::infinity();
    std::optional<std::pair<double, double>> seed_pair;
    if (opt.init) {
      for (std::size_t i = 0; i < cands.size(); ++i)
        for (std::size_t j = i + 1; j < cands.size(); ++j) {
          if (!detail::breakpoints_admissible(xs, cands[i], cands[j], mp)) continue;
          const double d = std::abs(cands[i] - opt.init->alpha[0]) + std::abs(cands[j] - opt.init->alpha[1]);
          if (d < bestd) {
            bestd = d;
            seed_pair = {cands[i], cands[j]};
          }
        }
    }
    if (seed_pair) {
      auto s = detail::solve_pair(xs, ys, tau, seed_pair->first, seed_pair->second, {});
      if (s) seed_basis = s->basis;
    }
  }

  std::vector<detail::PairSolve> row_best(cands.size());
  std::vector<char> row_any(cands.size(), 0);
  detail::parallel_for(cands.size(), opt.threads, [&](std::size_t i) {
    std::vector<std::size_t> warm = seed_basis;
    for (std::size_t j = i + 1; j < cands.size(); ++j) {
      if (!detail::breakpoints_admissible(xs, cands[i], cands[j], mp)) continue;
      row_any[i] = 1;
      auto s = detail::solve_pair(xs, ys, tau, cands[i], cands[j], warm);
      if (!s) continue;
      warm = s->basis;
      if (s->objective < row_best[i].objective) row_best[i] = std::move(*s);
    }
  });
  if (std::none_of(row_any.begin(), row_any.end(), [](char c) { return c != 0; }))
    throw FitError("no breakpoint pair leaves " + std::to_string(mp) + " points in every segment");
  detail::PairSolve best;
  for (auto& r : row_best)
    if (r.objective < best.objective) best = r;
  if (!std::isfinite(best.objective))
    throw FitError("quantile LP failed for every breakpoint pair");

  QuantileSegmentedFit fit;
  fit.tau = tau;
  fit.grid_objective = best.objective;

  if (opt.refine && opt.refine_steps > 0) {
    try {
      auto local_grid = [&](double a) {
        auto it = std::lower_bound(cands.begin(), cands.end(), a);
        const auto idx = static_cast<std::size_t>(it - cands.begin());
        const double lo = idx > 0 ? cands[idx - 1] : xs.front();
        const double hi = idx + 1 < cands.size() ? cands[idx + 1] : xs.back();
        std::vector<double> g;
        const std::size_t steps = 2 * opt.refine_steps;
        for (std::size_t s = 0; s <= steps; ++s)
          g.push_back(lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(steps));
        g.push_back(a);
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        return g;
      };
      const auto g1 = local_grid(best.a1);
      const auto g2 = local_grid(best.a2);
      std::vector<std::size_t> warm = best.basis;
      for (double a1 : g1)
        for (double a2 : g2) {
          if (!detail::breakpoints_admissible(xs, a1, a2, mp)) continue;
          auto s = detail::solve_pair(xs, ys, tau, a1, a2, warm);
          if (!s) continue;
          warm = s->basis;
          if (s->objective < best.objective) best = std::move(*s);
        }
    } catch (const Error&) {
      fit.status = QuantileSegmentedFit::Status::grid_fallback;
    }
  }

  fit.model = {best.beta, {best.a1, best.a2}};
  fit.objective = best.objective;

  double scale = 0.0;
  for (double y : ys) scale = std::max(scale, std::abs(y));
  const double tol = 1e-9 * (scale + 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ys[i] - fit.model(xs[i]);
    if (r < -tol)
      ++fit.negative;
    else if (r > tol)
      ++fit.positive;
    else
      ++fit.zero;
  }
  return fit;
}

inline QuantileSegmentedFit fit_segmented_quantile(const BivariateDataset& ds, double tau,
                                                   const QuantileOptions& opt = {}) {
  return fit_segmented_quantile(ds.xs(), ds.ys(), tau, opt);
}

inline std::vector<double> default_tau_grid() {
  return {0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90};
}

struct QuantileRow {
  double tau = 0.0;
  std::optional<QuantileSegmentedFit> fit;
  std::string error;  // set when the fit failed
};

// Fits every tau; failures are recorded per row instead of aborting.
inline std::vector<QuantileRow> fit_quantile_grid(const BivariateDataset& ds,
                                                  std::span<const double> taus,
                                                  const QuantileOptions& opt = {}) {
  std::vector<QuantileRow> rows;
  for (double tau : taus) {
    QuantileRow row;
    row.tau = tau;
    try {
      row.fit = fit_segmented_quantile(ds, tau, opt);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct BreakpointInterval {
  double lower = 0.0;
  double upper = 0.0;
  double tau_at_lower = 0.0;  // row attaining the minimum
  double tau_at_upper = 0.0;  // row attaining the maximum
  double width() const { return upper - lower; }
};

// Range of breakpoint estimates across a tau grid, read as an interval whose
// nominal coverage is (tau_max - tau_min) * 100%.
struct QuantileBreakpointTable {
  std::vector<QuantileRow> rows;
  BreakpointInterval alpha1;
  BreakpointInterval alpha2;
  double coverage_percent = 0.0;
  bool partial = false;

  std::string coverage_label() const {
    const double r = std::round(coverage_percent);
    char buf[32];
    if (std::abs(coverage_percent - r) < 1e-6)
      std::snprintf(buf, sizeof buf, "%.0f%%", r);
    else
      std::snprintf(buf, sizeof buf, "%.1f%%", coverage_percent);
    return buf;
  }
};

inline QuantileBreakpointTable quantile_breakpoint_intervals(std::vector<QuantileRow> rows) {
  QuantileBreakpointTable table;
  std::vector<const QuantileRow*> ok;
  for (const auto& r : rows) {
    if (r.fit)
      ok.push_back(&r);
    else
      table.partial = true;
  }
  std::vector<double> taus;
  for (auto* r : ok) taus.push_back(r->tau);
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  if (taus.size() < 2)
    throw FitError("breakpoint intervals need successful fits at two or more distinct tau values");

  auto range = [&](int which) {
    BreakpointInterval iv;
    iv.lower = std::numeric_limits<double>::infinity();
    iv.upper = -std::numeric_limits<double>::infinity();
    for (auto* r : ok) {
      const double a = r->fit->model.alpha[static_cast<std::size_t>(which)];
      if (a < iv.lower) {
        iv.lower = a;
        iv.tau_at_lower = r->tau;
      }
      if (a > iv.upper) {
        iv.upper = a;
        iv.tau_at_upper = r->tau;
      }
    }
    return iv;
  };
  table.alpha1 = range(0);
  table.alpha2 = range(1);
  table.coverage_percent = (taus.back() - taus.front()) * 100.0;
  table.rows = std::move(rows);
  return table;
}

// Band between the (1 - gamma) / 2 and (1 + gamma) / 2 quantile curves with the
// median-type curve as centre. Crossing points are flagged, not repaired.
inline PredictionBand pqrm_prediction_band(const QuantileSegmentedFit& lower_fit,
                                           const QuantileSegmentedFit& center_fit,
                                           const QuantileSegmentedFit& upper_fit,
                                           std::span<const double> grid, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma must lie in (0, 1)");
  if (std::abs(lower_fit.tau - (1.0 - gamma) / 2.0) > 1e-9 ||
      std::abs(upper_fit.tau - (1.0 + gamma) / 2.0) > 1e-9)
    throw InputError("quantile band for gamma " + detail::format_double(gamma) +
                     " needs fits at tau = (1 -+ gamma) / 2");
  PredictionBand band;
  band.method = "PQRM";
  band.gamma = gamma;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid[i];
    band.x.push_back(x);
    band.center.push_back(center_fit.model(x));
    band.lower.push_back(lower_fit.model(x));
    band.upper.push_back(upper_fit.model(x));
    if (band.lower.back() > band.upper.back()) band.crossings.push_back(i);
  }
  if (!band.crossings.empty())
    band.warnings.push_back("quantile curves cross at " + std::to_string(band.crossings.size()) +
                            " design points");
  return band;
}

}  // namespace breakline
