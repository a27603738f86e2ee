#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "breakline/core.hpp"
#include "breakline/random.hpp"
#include "breakline/segmented.hpp"

namespace breakline {

// Synthetic data from a known segmented truth. Used by the tests and by the
// `synth` subcommand to rehearse the pipeline without field data.
struct SyntheticSpec {
  struct Uniform {
    double lo = 0.0, hi = 1.0;
  };
  struct Fixed {
    std::vector<double> xs;
  };

  SegmentedModel truth{{10.0, 0.0, -5.0, 5.0}, {0.3, 0.6}};
  std::size_t n = 100;
  std::variant<Uniform, Fixed> design = Uniform{};
  double sigma = 0.5;        // noise sd at x = 0
  double wedge = 0.0;        // sd(x) = sigma (1 + wedge x); 0 is homoscedastic
  std::uint64_t seed = 1;
};

inline std::vector<double> equispaced(std::size_t n, double lo, double hi) {
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i)
    xs[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return xs;
}

// x values come from stream 0 of the seed, noise from stream 1.
inline BivariateDataset generate(const SyntheticSpec& spec) {
  if (spec.sigma < 0.0) throw InputError("noise sd must be non-negative");
  std::vector<double> xs;
  if (const auto* u = std::get_if<SyntheticSpec::Uniform>(&spec.design)) {
    if (!(u->hi > u->lo)) throw InputError("uniform design needs hi > lo");
    Rng rx(spec.seed, 0);
    xs.resize(spec.n);
    for (auto& x : xs) x = rx.uniform(u->lo, u->hi);
  } else {
    xs = std::get<SyntheticSpec::Fixed>(spec.design).xs;
  }
  if (xs.empty()) throw InputError("synthetic design is empty");
  Rng rn(spec.seed, 1);
  std::vector<double> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double sd = spec.sigma * (1.0 + spec.wedge * xs[i]);
    if (sd < 0.0) throw InputError("wedge makes the noise sd negative");
    const double z = rn.normal();
    ys[i] = spec.truth(xs[i]) + (sd > 0.0 ? sd * z : 0.0);
  }
  return BivariateDataset::from_points(std::move(xs), std::move(ys));
}

namespace oracle {

// Dense row-major matrix with n rows.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;
  double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
};

inline Matrix segmented_design(std::span<const double> xs, double a1, double a2) {
  Matrix m{xs.size(), 4, std::vector<double>(xs.size() * 4)};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    m(i, 0) = 1.0;
    m(i, 1) = xs[i];
    m(i, 2) = xs[i] > a1 ? xs[i] - a1 : 0.0;
    m(i, 3) = xs[i] > a2 ? xs[i] - a2 : 0.0;
  }
  return m;
}

// Gaussian elimination with partial pivoting on a square system; throws on a
// (numerically) singular matrix.
inline std::vector<double> solve_square(std::vector<double> a, std::vector<double> b, std::size_t k) {
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::abs(a[r * k + c]) > std::abs(a[piv * k + c])) piv = r;
    if (std::abs(a[piv * k + c]) <= 1e-13 * scale) throw FitError("oracle: singular system");
    if (piv != c) {
      for (std::size_t j = 0; j < k; ++j) std::swap(a[c * k + j], a[piv * k + j]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < k; ++r) {
      const double f = a[r * k + c] / a[c * k + c];
      for (std::size_t j = c; j < k; ++j) a[r * k + j] -= f * a[c * k + j];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(k);
  for (std::size_t c = k; c-- > 0;) {
    double s = b[c];
    for (std::size_t j = c + 1; j < k; ++j) s -= a[c * k + j] * x[j];
    x[c] = s / a[c * k + c];
  }
  return x;
}

// Least squares through the normal equations X^T X b = X^T y.
inline std::vector<double> ols(const Matrix& x, std::span<const double> y) {
  const std::size_t k = x.cols;
  std::vector<double> xtx(k * k, 0.0), xty(k, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t i = 0; i < k; ++i) {
      xty[i] += x(r, i) * y[r];
      for (std::size_t j = 0; j < k; ++j) xtx[i * k + j] += x(r, i) * x(r, j);
    }
  return solve_square(std::move(xtx), std::move(xty), k);
}

inline double rss(const Matrix& x, std::span<const double> y, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows; ++r) {
    double f = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) f += x(r, c) * b[c];
    s += (y[r] - f) * (y[r] - f);
  }
  return s;
}

// Minimum check loss over every exact-fit basic solution (all subsets of
// `cols` observations with a nonsingular submatrix). Exponential; small n only.
inline double quantile_objective(const Matrix& x, std::span<const double> y, double tau) {
  const std::size_t n = x.rows, k = x.cols;
  if (k > n) throw InputError("oracle: more columns than rows");
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(k);
  for (std::size_t i = 0; i < k; ++i) pick[i] = i;
  for (;;) {
    std::vector<double> a(k * k), b(k);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) a[r * k + c] = x(pick[r], c);
      b[r] = y[pick[r]];
    }
    try {
      const auto coef = solve_square(a, b, k);
      double obj = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        double f = 0.0;
        for (std::size_t c = 0; c < k; ++c) f += x(r, c) * coef[c];
        const double u = y[r] - f;
        obj += u * (tau - (u < 0.0 ? 1.0 : 0.0));
      }
      best = std::min(best, obj);
    } catch (const FitError&) {
    }
    // Next combination.
    std::size_t i = k;
    while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  if (!std::isfinite(best)) throw FitError("oracle: design is rank deficient");
  return best;
}

}  // namespace oracle

inline std::vector<double> ols_oracle(const oracle::Matrix& design, std::span<const double> ys) {
  return oracle::ols(design, ys);
}

inline double quantile_oracle(const oracle::Matrix& design, std::span<const double> ys, double tau) {
  return oracle::quantile_objective(design, ys, tau);
}

}  // namespace breakline
