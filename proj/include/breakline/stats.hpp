#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "breakline/core.hpp"

namespace breakline {

inline double student_t_quantile(double p, double df) {
  boost::math::students_t dist(df);
  return boost::math::quantile(dist, p);
}

// Two-sided p-value of a t statistic.
inline double student_t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Linear interpolation between closest ranks: rank r = q (B - 1) + 1 on the
// sorted sample. `sorted` must be ascending.
inline double empirical_quantile_sorted(std::span<const double> sorted, double q) {
  const auto count = sorted.size();
  if (count == 0) throw InputError("quantile of an empty sample");
  const double pos = q * static_cast<double>(count - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= count) return sorted[count - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double empirical_quantile(std::vector<double> sample, double q) {
  std::sort(sample.begin(), sample.end());
  return empirical_quantile_sorted(sample, q);
}

struct MeanInterval {
  std::size_t n = 0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Mean with a t-based confidence interval. NaN bounds when n < 2.
inline MeanInterval mean_interval(std::span<const double> v, double level = 0.95) {
  MeanInterval r;
  r.n = v.size();
  r.mean = v.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(v);
  if (v.size() < 2) {
    r.lower = r.upper = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double half = student_t_quantile(0.5 + level / 2.0, static_cast<double>(v.size() - 1)) *
                      std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
  r.lower = r.mean - half;
  r.upper = r.mean + half;
  return r;
}

struct GroupSummary {
  std::string group;  // "all" for the combined row
  MeanInterval x;
  MeanInterval y;
};

// Means and 95% CIs of both variables, overall then per label group (sorted by label).
inline std::vector<GroupSummary> summarize(const BivariateDataset& ds, double level = 0.95) {
  if (ds.size() < 2) throw InputError("summary requires at least 2 points (variance undefined)");
  std::vector<GroupSummary> out;
  out.push_back({"all", mean_interval(ds.xs(), level), mean_interval(ds.ys(), level)});
  if (ds.has_labels()) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto& g = groups[ds.labels()[i]];
      g.first.push_back(ds.xs()[i]);
      g.second.push_back(ds.ys()[i]);
    }
    for (const auto& [label, g] : groups)
      out.push_back({label, mean_interval(g.first, level), mean_interval(g.second, level)});
  }
  return out;
}

}  // namespace breakline
