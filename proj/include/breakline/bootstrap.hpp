#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "breakline/core.hpp"
#include "breakline/loess.hpp"
#include "breakline/random.hpp"
#include "breakline/stats.hpp"

namespace breakline {

// Fits a mean model to (xs, ys) and returns its fitted values at xs. Must be
// safe to call concurrently; signals failure by throwing.
using MeanFitter =
    std::function<std::vector<double>(std::span<const double> xs, std::span<const double> ys)>;

struct BandConfig {
  std::size_t replicates = 10000;
  double gamma = 0.80;
  std::uint64_t seed = 20190101;
  unsigned threads = 1;
  int max_retries = 10;

  static std::size_t min_replicates(double gamma) {
    return static_cast<std::size_t>(std::ceil(2.0 / (1.0 - gamma) - 1e-9));
  }

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma must lie in (0, 1)");
    if (replicates < min_replicates(gamma))
      throw InputError("bootstrap replicate count " + std::to_string(replicates) +
                       " too small for gamma " + detail::format_double(gamma) + " (need at least " +
                       std::to_string(min_replicates(gamma)) + ")");
  }
};

// Predicted residuals e*p for every design point and replicate. Bands at any
// gamma are read off the same pool.
class BootstrapPool {
 public:
  BootstrapPool(std::vector<double> xs, std::vector<double> center, std::size_t replicates)
      : xs_(std::move(xs)),
        center_(std::move(center)),
        replicates_(replicates),
        values_(xs_.size() * replicates) {}

  std::size_t points() const { return xs_.size(); }
  std::size_t replicates() const { return replicates_; }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& center() const { return center_; }

  // Row i holds the B predicted residuals at design point i.
  std::span<double> row(std::size_t i) { return {values_.data() + i * replicates_, replicates_}; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * replicates_, replicates_};
  }

  // Sorts every row once; required before band().
  void finalize() {
    for (std::size_t i = 0; i < points(); ++i) {
      auto r = row(i);
      std::sort(r.begin(), r.end());
    }
    sorted_ = true;
  }

  PredictionBand band(double gamma, std::string method = "bootstrap") const {
    if (!sorted_) throw InputError("bootstrap pool not finalized");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma must lie in (0, 1)");
    if (replicates_ < BandConfig::min_replicates(gamma))
      throw InputError("bootstrap pool too small for gamma " + detail::format_double(gamma));
    PredictionBand band;
    band.method = std::move(method);
    band.gamma = gamma;
    band.x = xs_;
    band.center = center_;
    band.lower.resize(points());
    band.upper.resize(points());
    for (std::size_t i = 0; i < points(); ++i) {
      band.lower[i] = center_[i] + empirical_quantile_sorted(row(i), (1.0 - gamma) / 2.0);
      band.upper[i] = center_[i] + empirical_quantile_sorted(row(i), (1.0 + gamma) / 2.0);
    }
    return band;
  }

 private:
  std::vector<double> xs_;
  std::vector<double> center_;
  std::size_t replicates_;
  std::vector<double> values_;
  bool sorted_ = false;
};

namespace detail {

inline void center_in_place(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

}  // namespace detail

// Residual-bootstrap prediction band:
//  (a) fit the mean model once, yhat = m(x_i);
//  (b) centre the residuals;
//  (c) per replicate: resample centred residuals onto yhat, refit m*, centre the
//      refit residuals, resample them again and record
//      e*p_i = m(x_i) - m*(x_i) + e**_i;
//  (e) band_i = yhat_i + empirical quantiles of e*p_i at (1 -+ gamma) / 2.
// Replicate b draws from Rng(seed, b), so output does not depend on threads.
inline BootstrapPool bootstrap_pool(std::span<const double> xs, std::span<const double> ys,
                                    const MeanFitter& fitter, const BandConfig& cfg) {
  cfg.validate();
  const std::size_t n = xs.size();
  if (n != ys.size() || n == 0) throw InputError("bootstrap: x and y differ in length or are empty");

  std::vector<double> center = fitter(xs, ys);
  if (center.size() != n) throw FitError("bootstrap: fitter returned wrong number of values");
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = ys[i] - center[i];
  detail::center_in_place(resid);

  BootstrapPool pool(std::vector<double>(xs.begin(), xs.end()), center, cfg.replicates);
  // Stored replicate-major per worker then scattered, so rows stay contiguous.
  std::vector<double> scratch(n * cfg.replicates);

  auto run_replicate = [&](std::size_t b) {
    Rng rng(cfg.seed, b);
    std::vector<double> ystar(n), refit, e(n);
    for (int attempt = 0;; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) ystar[i] = center[i] + resid[rng.index(n)];
      try {
        refit = fitter(xs, ystar);
        if (refit.size() != n) throw FitError("fitter returned wrong number of values");
        break;
      } catch (const Error&) {
        if (attempt + 1 >= cfg.max_retries)
          throw FitError("bootstrap replicate " + std::to_string(b) + " failed after " +
                         std::to_string(cfg.max_retries) + " attempts");
      }
    }
    for (std::size_t i = 0; i < n; ++i) e[i] = ystar[i] - refit[i];
    detail::center_in_place(e);
    double* out = scratch.data() + b * n;
    for (std::size_t i = 0; i < n; ++i) out[i] = center[i] - refit[i] + e[rng.index(n)];
  };

  unsigned workers = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                      : cfg.threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cfg.replicates));
  if (workers <= 1) {
    for (std::size_t b = 0; b < cfg.replicates; ++b) run_replicate(b);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool_threads;
    for (unsigned w = 0; w < workers; ++w) {
      pool_threads.emplace_back([&, w] {
        try {
          for (std::size_t b = w; b < cfg.replicates; b += workers) run_replicate(b);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool_threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (std::size_t b = 0; b < cfg.replicates; ++b)
    for (std::size_t i = 0; i < n; ++i) pool.row(i)[b] = scratch[b * n + i];
  pool.finalize();
  return pool;
}

inline PredictionBand bootstrap_band(const BivariateDataset& ds, const MeanFitter& fitter,
                                     const BandConfig& cfg, std::string method = "bootstrap") {
  return bootstrap_pool(ds.xs(), ds.ys(), fitter, cfg).band(cfg.gamma, std::move(method));
}

inline MeanFitter loess_mean_fitter(LoessConfig cfg) {
  return [cfg](std::span<const double> xs, std::span<const double> ys) {
    return fit_loess(xs, ys, cfg).fitted;
  };
}

// Bootstrapped loess band on the observed design.
inline PredictionBand loess_band(const BivariateDataset& ds, const LoessConfig& loess,
                                 const BandConfig& cfg) {
  return bootstrap_band(ds, loess_mean_fitter(loess), cfg, "BL");
}

}  // namespace breakline
