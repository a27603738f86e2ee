#include <cmath>

#include <gtest/gtest.h>

#include "breakline/bootstrap.hpp"
#include "breakline/random.hpp"
#include "breakline/report.hpp"

using namespace breakline;

namespace {

std::vector<double> ols_line(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double a = (sy - b * sx) / n;
  std::vector<double> out;
  for (double x : xs) out.push_back(a + b * x);
  return out;
}

BivariateDataset linear_sample(std::uint64_t seed, std::size_t n) {
  Rng r(seed, 99);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n; ++i) {
    xs.push_back(r.uniform(0, 10));
    ys.push_back(1.0 + 0.5 * xs.back() + r.normal());
  }
  return BivariateDataset::from_points(xs, ys);
}

}  // namespace

TEST(Bootstrap, ZeroNoiseCollapses) {
  std::vector<double> xs{0, 1, 2, 3, 4, 5}, ys{1, 3, 5, 7, 9, 11};
  const auto ds = BivariateDataset::from_points(xs, ys);
  BandConfig cfg;
  cfg.replicates = 200;
  const auto band = bootstrap_band(ds, ols_line, cfg);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_NEAR(band.lower[i], ys[i], 1e-9);
    EXPECT_NEAR(band.upper[i], ys[i], 1e-9);
  }
}

TEST(Bootstrap, SameSeedSameBytes) {
  const auto ds = linear_sample(1, 12);
  BandConfig cfg;
  cfg.replicates = 100;
  cfg.seed = 77;
  const auto a = bootstrap_band(ds, ols_line, cfg);
  const auto b = bootstrap_band(ds, ols_line, cfg);
  EXPECT_EQ(report::band_csv(a, {}), report::band_csv(b, {}));
  cfg.seed = 78;
  const auto c = bootstrap_band(ds, ols_line, cfg);
  EXPECT_NE(report::band_csv(a, {}), report::band_csv(c, {}));
}

TEST(Bootstrap, ThreadCountDoesNotChangeBand) {
  const auto ds = linear_sample(2, 40);
  BandConfig cfg;
  cfg.replicates = 500;
  const auto one = bootstrap_band(ds, ols_line, cfg);
  cfg.threads = 3;
  const auto three = bootstrap_band(ds, ols_line, cfg);
  EXPECT_EQ(one.lower, three.lower);
  EXPECT_EQ(one.upper, three.upper);
}

TEST(Bootstrap, FollowsTheResamplingRecipe) {
  // Replays the recipe by hand for replicate 0..B-1 and compares the pool.
  const auto ds = linear_sample(3, 9);
  BandConfig cfg;
  cfg.replicates = 30;
  cfg.seed = 5;
  const auto pool = bootstrap_pool(ds.xs(), ds.ys(), ols_line, cfg);
  const std::size_t n = ds.size();
  const auto m = ols_line(ds.xs(), ds.ys());
  std::vector<double> eps(n);
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += (eps[i] = ds.ys()[i] - m[i]) / n;
  for (auto& e : eps) e -= mean;
  std::vector<std::vector<double>> rows(n);
  for (std::size_t b = 0; b < cfg.replicates; ++b) {
    Rng r(cfg.seed, b);
    std::vector<double> ystar(n);
    for (std::size_t i = 0; i < n; ++i) ystar[i] = m[i] + eps[r.index(n)];
    const auto ms = ols_line(ds.xs(), ystar);
    std::vector<double> es(n);
    double em = 0;
    for (std::size_t i = 0; i < n; ++i) em += (es[i] = ystar[i] - ms[i]) / n;
    for (auto& e : es) e -= em;
    for (std::size_t i = 0; i < n; ++i) rows[i].push_back(m[i] - ms[i] + es[r.index(n)]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    const auto got = pool.row(i);
    for (std::size_t b = 0; b < cfg.replicates; ++b) ASSERT_NEAR(got[b], rows[i][b], 1e-12);
  }
}

TEST(Bootstrap, CentredResiduals) {
  std::vector<double> v{1.0, 2.0, 3.5, -0.25};
  detail::center_in_place(v);
  double s = 0;
  for (double x : v) s += x;
  EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(Bootstrap, BandsAreOrderedAndNested) {
  const auto ds = linear_sample(4, 50);
  BandConfig cfg;
  cfg.replicates = 1000;
  cfg.gamma = 0.95;
  const auto pool = bootstrap_pool(ds.xs(), ds.ys(), ols_line, cfg);
  const auto b80 = pool.band(0.80);
  const auto b95 = pool.band(0.95);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_LE(b80.lower[i], b80.upper[i]);
    EXPECT_LE(b95.lower[i], b80.lower[i]);
    EXPECT_GE(b95.upper[i], b80.upper[i]);
  }
}

TEST(Bootstrap, ReplicateFloor) {
  EXPECT_EQ(BandConfig::min_replicates(0.80), 10u);
  EXPECT_EQ(BandConfig::min_replicates(0.95), 40u);
  const auto ds = linear_sample(5, 10);
  BandConfig cfg;
  cfg.replicates = 9;
  EXPECT_THROW(bootstrap_band(ds, ols_line, cfg), InputError);
  cfg.replicates = 10;
  EXPECT_NO_THROW(bootstrap_band(ds, ols_line, cfg));
  cfg.gamma = 1.0;
  EXPECT_THROW(bootstrap_band(ds, ols_line, cfg), InputError);
}

TEST(Bootstrap, RetriesThenGivesUp) {
  const auto ds = linear_sample(6, 10);
  int calls = 0;
  MeanFitter flaky = [&](std::span<const double> xs, std::span<const double> ys) {
    if (calls++ % 2 == 1) throw FitError("flaky");
    return ols_line(xs, ys);
  };
  BandConfig cfg;
  cfg.replicates = 20;
  EXPECT_NO_THROW(bootstrap_band(ds, flaky, cfg));

  int first = 0;
  MeanFitter broken = [&](std::span<const double> xs, std::span<const double> ys) {
    if (first++ == 0) return ols_line(xs, ys);
    throw FitError("always");
  };
  EXPECT_THROW(bootstrap_band(ds, broken, cfg), FitError);
}

TEST(Bootstrap, CoverageNearNominal) {
  // Smaller version of the acceptance check: 10 repetitions, B = 1000.
  double covered = 0, total = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto ds = linear_sample(100 + rep, 100);
    BandConfig cfg;
    cfg.replicates = 1000;
    cfg.seed = rep;
    const auto band = bootstrap_band(ds, ols_line, cfg);
    Rng fresh(500 + rep);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double y = 1.0 + 0.5 * ds.xs()[i] + fresh.normal();
      covered += band.lower[i] <= y && y <= band.upper[i];
      ++total;
    }
  }
  EXPECT_NEAR(covered / total, 0.80, 0.07);
}

TEST(Bootstrap, LoessBandLabel) {
  const auto ds = linear_sample(7, 30);
  BandConfig cfg;
  cfg.replicates = 50;
  const auto band = loess_band(ds, {}, cfg);
  EXPECT_EQ(band.method, "BL");
  EXPECT_EQ(band.x, ds.xs());
}
