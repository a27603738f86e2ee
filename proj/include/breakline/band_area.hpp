#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "breakline/core.hpp"

namespace breakline {

struct AreaConfig {
  enum class Mode { grid, exact };

  std::size_t grid_cells = 10000;
  Mode mode = Mode::grid;
};

struct AreaResult {
  double area = 0.0;
  bool degenerate = false;  // single distinct x: zero area by definition
};

namespace detail {

// Band envelope with one knot per distinct x; tied design points are averaged.
struct Envelope {
  std::vector<double> x, lower, upper;

  explicit Envelope(const PredictionBand& band) {
    std::vector<std::size_t> order(band.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return band.x[a] < band.x[b]; });
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      double lo = 0.0, hi = 0.0;
      while (j < order.size() && band.x[order[j]] == band.x[order[i]]) {
        lo += band.lower[order[j]];
        hi += band.upper[order[j]];
        ++j;
      }
      const auto cnt = static_cast<double>(j - i);
      x.push_back(band.x[order[i]]);
      lower.push_back(lo / cnt);
      upper.push_back(hi / cnt);
      i = j;
    }
  }

  double height_at(double at) const {
    auto it = std::upper_bound(x.begin(), x.end(), at);
    std::size_t k = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
    if (k + 1 >= x.size()) k = x.size() - 2;
    const double t = (at - x[k]) / (x[k + 1] - x[k]);
    const double lo = lower[k] + t * (lower[k + 1] - lower[k]);
    const double hi = upper[k] + t * (upper[k + 1] - upper[k]);
    return std::max(hi - lo, 0.0);
  }
};

}  // namespace detail

// Area between the band limits. Grid mode sums (height x width) over uniform
// cells, height taken at each cell midpoint from the linearly interpolated
// envelopes. Exact mode integrates the clamped piecewise-linear height.
inline AreaResult band_area(const PredictionBand& band, const AreaConfig& cfg = {}) {
  if (band.x.size() != band.lower.size() || band.x.size() != band.upper.size())
    throw InputError("band arrays differ in length");
  if (band.x.size() < 2) throw InputError("band area needs at least two design points");
  if (cfg.grid_cells < 1) throw InputError("grid_cells must be at least 1");
  const detail::Envelope env(band);
  AreaResult out;
  if (env.x.size() < 2) {
    out.degenerate = true;
    return out;
  }

  if (cfg.mode == AreaConfig::Mode::grid) {
    const double lo = env.x.front(), hi = env.x.back();
    const double width = (hi - lo) / static_cast<double>(cfg.grid_cells);
    double sum = 0.0;
    for (std::size_t c = 0; c < cfg.grid_cells; ++c) {
      const double mid = lo + (static_cast<double>(c) + 0.5) * width;
      sum += env.height_at(mid);
    }
    out.area = sum * width;
    return out;
  }

  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < env.x.size(); ++k) {
    const double h0 = env.upper[k] - env.lower[k];
    const double h1 = env.upper[k + 1] - env.lower[k + 1];
    const double w = env.x[k + 1] - env.x[k];
    if (h0 >= 0.0 && h1 >= 0.0) {
      sum += 0.5 * (h0 + h1) * w;
    } else if (h0 > 0.0 || h1 > 0.0) {
      // Height changes sign inside the segment; keep the positive triangle.
      const double pos = std::max(h0, h1), neg = std::min(h0, h1);
      sum += 0.5 * pos * w * pos / (pos - neg);
    }
  }
  out.area = sum;
  return out;
}

inline PredictionBand& attach_area(PredictionBand& band, const AreaConfig& cfg = {}) {
  band.area = band_area(band, cfg).area;
  return band;
}

struct LabeledBand {
  std::string method;
  PredictionBand band;
};

struct LabeledIntervals {
  std::string method;
  std::string coverage_label;  // e.g. "80%"
  std::optional<std::pair<double, double>> alpha1;
  std::optional<std::pair<double, double>> alpha2;
};

struct WidthCell {
  std::string method;
  double lower = 0.0, upper = 0.0, width = 0.0;
  bool minimum = false;
};

struct WidthRow {
  std::string parameter;  // alpha1 / alpha2
  std::vector<WidthCell> cells;
  bool tie = false;
};

struct AreaCell {
  std::string method;
  double area = 0.0;
  bool minimum = false;
};

struct Ratio {
  std::string numerator, denominator;
  double value = 0.0;  // numerator / denominator
  double percent() const { return 100.0 * value; }
};

struct ComparisonReport {
  double gamma = 0.0;
  std::string coverage_label;
  std::vector<WidthRow> widths;
  std::vector<AreaCell> areas;
  bool area_tie = false;
  std::vector<Ratio> width_ratios;  // one entry per breakpoint and ordered method pair
  std::vector<std::string> width_ratio_parameter;
  std::vector<Ratio> area_ratios;
};

// Breakpoint-interval widths and band areas side by side, the smallest value
// per row flagged. Bands without an attached area are measured with `cfg`.
inline ComparisonReport compare_methods(const std::vector<LabeledBand>& bands,
                                        const std::vector<LabeledIntervals>& intervals,
                                        const AreaConfig& cfg = {}) {
  ComparisonReport rep;
  for (const auto& b : bands) {
    if (rep.areas.empty())
      rep.gamma = b.band.gamma;
    else if (std::abs(b.band.gamma - rep.gamma) > 1e-12)
      throw InputError("bands have different confidence coefficients (" +
                       detail::format_double(rep.gamma) + " vs " +
                       detail::format_double(b.band.gamma) + ")");
    const double a = b.band.area ? *b.band.area : band_area(b.band, cfg).area;
    rep.areas.push_back({b.method, a, false});
  }
  for (const auto& iv : intervals) {
    if (rep.coverage_label.empty())
      rep.coverage_label = iv.coverage_label;
    else if (iv.coverage_label != rep.coverage_label)
      throw InputError("breakpoint intervals have different coverage (" + rep.coverage_label +
                       " vs " + iv.coverage_label + ")");
  }

  constexpr double tie_tol = 1e-12;
  auto flag_min = [&](auto& cells, auto value_of) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : cells) m = std::min(m, value_of(c));
    std::size_t count = 0;
    for (auto& c : cells) {
      c.minimum = value_of(c) <= m + tie_tol * std::max(1.0, std::abs(m));
      count += c.minimum ? 1 : 0;
    }
    return count > 1;
  };
  rep.area_tie = !rep.areas.empty() && flag_min(rep.areas, [](const AreaCell& c) { return c.area; });

  for (int which = 0; which < 2; ++which) {
    WidthRow row;
    row.parameter = which == 0 ? "alpha1" : "alpha2";
    for (const auto& iv : intervals) {
      const auto& r = which == 0 ? iv.alpha1 : iv.alpha2;
      if (!r) continue;
      row.cells.push_back({iv.method, r->first, r->second, r->second - r->first, false});
    }
    if (row.cells.empty()) continue;
    row.tie = flag_min(row.cells, [](const WidthCell& c) { return c.width; });
    for (std::size_t i = 0; i < row.cells.size(); ++i)
      for (std::size_t j = 0; j < row.cells.size(); ++j) {
        if (i == j) continue;
        rep.width_ratios.push_back({row.cells[i].method, row.cells[j].method,
                                    row.cells[i].width / row.cells[j].width});
        rep.width_ratio_parameter.push_back(row.parameter);
      }
    rep.widths.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < rep.areas.size(); ++i)
    for (std::size_t j = 0; j < rep.areas.size(); ++j) {
      if (i == j) continue;
      rep.area_ratios.push_back(
          {rep.areas[i].method, rep.areas[j].method, rep.areas[i].area / rep.areas[j].area});
    }
  return rep;
}

}  // namespace breakline
