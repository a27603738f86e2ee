#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "breakline/loess.hpp"
#include "breakline/random.hpp"
#include "breakline/synthetic.hpp"

using namespace breakline;

namespace {

// Straight weighted least squares at one target: sort distances, take the
// k-th smallest as the radius, tricube weights, normal equations in raw x.
double wls_at(const std::vector<double>& xs, const std::vector<double>& ys,
              const std::vector<double>& rob, double span, int degree, double x0) {
  const std::size_t n = xs.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = std::abs(xs[i] - x0);
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n) - 1e-9));
  const double radius = sorted[std::min(k, n) - 1];
  const std::size_t p = static_cast<std::size_t>(degree) + 1;
  std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = d[i] / radius;
    const double w = (u < 1.0 ? std::pow(1.0 - u * u * u, 3) : 0.0) * rob[i];
    if (w == 0.0) continue;
    std::vector<double> row(p);
    for (std::size_t c = 0; c < p; ++c) row[c] = std::pow(xs[i] - x0, static_cast<double>(c));
    for (std::size_t a = 0; a < p; ++a) {
      xty[a] += w * row[a] * ys[i];
      for (std::size_t b = 0; b < p; ++b) xtx[a * p + b] += w * row[a] * row[b];
    }
  }
  return oracle::solve_square(xtx, xty, p)[0];
}

std::vector<double> oracle_fit(const std::vector<double>& xs, const std::vector<double>& ys,
                               double span, int degree, int robust) {
  std::vector<double> rob(xs.size(), 1.0), fitted(xs.size());
  for (int pass = 0; pass <= robust; ++pass) {
    for (std::size_t i = 0; i < xs.size(); ++i) fitted[i] = wls_at(xs, ys, rob, span, degree, xs[i]);
    if (pass == robust) break;
    std::vector<double> a(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) a[i] = std::abs(ys[i] - fitted[i]);
    std::sort(a.begin(), a.end());
    const std::size_t m = a.size() / 2;
    const double mad = a.size() % 2 ? a[m] : 0.5 * (a[m - 1] + a[m]);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double u = (ys[i] - fitted[i]) / (6.0 * mad);
      rob[i] = std::abs(u) < 1.0 ? (1 - u * u) * (1 - u * u) : 0.0;
    }
  }
  return fitted;
}

struct Sample {
  std::vector<double> xs, ys;
};

Sample noisy(std::uint64_t seed, std::size_t n) {
  Rng r(seed);
  Sample s;
  for (std::size_t i = 0; i < n; ++i) s.xs.push_back(r.uniform(0, 3));
  std::sort(s.xs.begin(), s.xs.end());
  for (double x : s.xs) s.ys.push_back(std::sin(2 * x) + 0.3 * r.normal());
  return s;
}

}  // namespace

TEST(Loess, AffineReproduction) {
  for (int degree : {1, 2}) {
    std::vector<double> xs, ys;
    for (int i = 0; i < 25; ++i) {
      xs.push_back(0.1 * i * i);
      ys.push_back(2 * xs.back() + 1);
    }
    const auto fit = fit_loess(xs, ys, {0.4, degree, 4});
    for (std::size_t i = 0; i < xs.size(); ++i) {
      EXPECT_NEAR(fit.fitted[i], ys[i], 1e-9);
      EXPECT_NEAR(fit.residuals[i], 0.0, 1e-9);
    }
    for (double g : {0.05, 1.7, 33.3}) EXPECT_NEAR(predict_loess(fit, std::vector{g})[0], 2 * g + 1, 1e-9);
  }
}

TEST(Loess, QuadraticReproduction) {
  std::vector<double> xs, ys;
  for (int i = 0; i < 30; ++i) {
    xs.push_back(i / 3.0);
    ys.push_back(3 - xs.back() + 0.5 * xs.back() * xs.back());
  }
  const auto fit = fit_loess(xs, ys, {0.3, 2, 0});
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(fit.fitted[i], ys[i], 1e-8 * std::abs(ys[i]));
}

TEST(Loess, ConstantReproduction) {
  std::vector<double> xs{0, 1, 2, 3, 4, 5, 6}, ys(7, 4.25);
  const auto fit = fit_loess(xs, ys, {});
  for (double f : fit.fitted) EXPECT_NEAR(f, 4.25, 1e-12);
}

TEST(Loess, FiveTargetsAgainstOracle) {
  std::vector<double> xs{0.0, 0.7, 1.1, 2.5, 4.0}, ys{1.0, 0.2, 2.4, 1.9, 3.3};
  const auto fit = fit_loess(xs, ys, {1.0, 1, 0});
  const auto want = oracle_fit(xs, ys, 1.0, 1, 0);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(fit.fitted[i], want[i], 1e-10);
}

TEST(Loess, MatchesOracleWithRobustness) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = noisy(seed, 40);
    for (int degree : {1, 2})
      for (double span : {0.3, 0.75, 1.0}) {
        const auto fit = fit_loess(s.xs, s.ys, {span, degree, 2});
        const auto want = oracle_fit(s.xs, s.ys, span, degree, 2);
        for (std::size_t i = 0; i < s.xs.size(); ++i)
          ASSERT_NEAR(fit.fitted[i], want[i], 1e-8) << "seed " << seed << " span " << span;
      }
  }
}

TEST(Loess, PredictMidpointMatchesOracle) {
  std::vector<double> xs{0.0, 1.0, 3.0}, ys{0.0, 2.0, 1.0};
  const auto fit = fit_loess(xs, ys, {1.0, 1, 0});
  const double mid = 1.2;
  EXPECT_NEAR(predict_loess(fit, std::vector{mid})[0],
              wls_at(xs, ys, {1, 1, 1}, 1.0, 1, mid), 1e-12);
}

TEST(Loess, PredictOnDesignEqualsFitted) {
  const auto s = noisy(4, 60);
  const auto fit = fit_loess(s.xs, s.ys, {});
  const auto pred = predict_loess(fit, s.xs);
  for (std::size_t i = 0; i < s.xs.size(); ++i) EXPECT_NEAR(pred[i], fit.fitted[i], 1e-12);
  EXPECT_THROW(predict_loess(fit, std::vector{s.xs.back() + 0.1}), InputError);
  EXPECT_THROW(predict_loess(fit, std::vector{s.xs.front() - 0.1}), InputError);
}

TEST(Loess, Locality) {
  const auto s = noisy(8, 80);
  auto ys = s.ys;
  ys.back() += 1000.0;  // far from the first point's neighborhood
  const LoessConfig cfg{0.2, 2, 0};
  const auto a = fit_loess(s.xs, s.ys, cfg);
  const auto b = fit_loess(s.xs, ys, cfg);
  EXPECT_EQ(a.fitted[0], b.fitted[0]);
}

TEST(Loess, RobustnessShrinksOutlierPull) {
  const auto s = noisy(12, 60);
  auto ys = s.ys;
  const std::size_t j = 30;
  ys[j] += 25.0;
  const auto clean = fit_loess(s.xs, s.ys, {0.5, 2, 0});
  const auto plain = fit_loess(s.xs, ys, {0.5, 2, 0});
  const auto robust = fit_loess(s.xs, ys, {0.5, 2, 4});
  EXPECT_LT(std::abs(robust.fitted[j] - clean.fitted[j]), std::abs(plain.fitted[j] - clean.fitted[j]));
  EXPECT_LT(robust.robustness[j], 0.1);
}

TEST(Loess, TiesShareTheFit) {
  std::vector<double> xs{0, 1, 1, 1, 2, 3, 4, 5}, ys{0, 1, 2, 3, 2, 3, 4, 5};
  const auto fit = fit_loess(xs, ys, {0.8, 1, 0});
  EXPECT_EQ(fit.fitted[1], fit.fitted[2]);
  EXPECT_EQ(fit.fitted[2], fit.fitted[3]);
}

TEST(Loess, ConfigErrors) {
  std::vector<double> xs{0, 1, 2, 3, 4, 5}, ys{0, 1, 0, 1, 0, 1};
  EXPECT_THROW(fit_loess(xs, ys, {0.0, 2, 0}), InputError);
  EXPECT_THROW(fit_loess(xs, ys, {1.5, 2, 0}), InputError);
  EXPECT_THROW(fit_loess(xs, ys, {0.75, 3, 0}), InputError);
  EXPECT_THROW(fit_loess(xs, ys, {0.75, 2, -1}), InputError);
  EXPECT_THROW(fit_loess(xs, ys, {0.2, 2, 0}), InputError);  // 2 points per neighborhood
  EXPECT_THROW(fit_loess(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 2}, {1.0, 2, 0}),
               InputError);
}

TEST(Loess, SingularLocalFitNamesTheTarget) {
  // Three neighbors per target; the farthest gets zero weight, leaving two distinct
  // x values for a quadratic.
  std::vector<double> xs{0, 1, 2, 3, 4, 5}, ys{1, 2, 3, 4, 5, 6};
  try {
    fit_loess(xs, ys, {0.5, 2, 0});
    FAIL();
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("x = 0"), std::string::npos) << e.what();
  }
}

TEST(Loess, CurvaturePeaksFindKinks) {
  std::vector<double> xs, ys;
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    xs.push_back(x);
    ys.push_back(x < 0.3 ? 0.0 : (x < 0.6 ? -(x - 0.3) : -0.3));
  }
  const auto fit = fit_loess(xs, ys, {0.1, 1, 0});
  auto peaks = loess_curvature_peaks(fit, 2);
  ASSERT_EQ(peaks.size(), 2u);
  std::sort(peaks.begin(), peaks.end());
  EXPECT_NEAR(peaks[0], 0.3, 0.03);
  EXPECT_NEAR(peaks[1], 0.6, 0.03);
}
