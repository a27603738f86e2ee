#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "breakline/band_area.hpp"
#include "breakline/core.hpp"
#include "breakline/quantile.hpp"
#include "breakline/segmented.hpp"
#include "breakline/stats.hpp"

namespace breakline::report {

using json = nlohmann::ordered_json;

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return detail::format_double(v, 12);
}

// JSON has no inf/nan; those become null.
inline json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

// First line is a '#'-prefixed JSON header, then x,center,lower,upper rows.
inline std::string band_csv(const PredictionBand& band, const json& header) {
  std::string out = "# " + header.dump() + "\n";
  out += "x,center,lower,upper\n";
  for (std::size_t i = 0; i < band.x.size(); ++i)
    out += num(band.x[i]) + "," + num(band.center[i]) + "," + num(band.lower[i]) + "," +
           num(band.upper[i]) + "\n";
  return out;
}

inline json band_header(const PredictionBand& band, std::optional<std::size_t> replicates,
                        std::optional<std::uint64_t> seed) {
  json h;
  h["method"] = band.method;
  h["gamma"] = band.gamma;
  h["B"] = replicates ? json(*replicates) : json(nullptr);
  h["seed"] = seed ? json(*seed) : json(nullptr);
  h["area"] = band.area ? jnum(*band.area) : json(nullptr);
  if (!band.crossings.empty()) h["crossings"] = band.crossings;
  return h;
}

inline json summary_json(const std::vector<GroupSummary>& rows, const BivariateDataset& ds) {
  auto var = [](const MeanInterval& m) {
    json j;
    j["n"] = m.n;
    j["mean"] = jnum(m.mean);
    j["ci_lower"] = jnum(m.lower);
    j["ci_upper"] = jnum(m.upper);
    return j;
  };
  json out = json::array();
  for (const auto& r : rows) {
    json j;
    j["group"] = r.group;
    j[ds.x_name()] = var(r.x);
    j[ds.y_name()] = var(r.y);
    out.push_back(std::move(j));
  }
  return out;
}

inline json inference_row_json(const InferenceRow& r) {
  json j;
  j["parameter"] = r.parameter;
  j["estimate"] = jnum(r.estimate);
  j["se"] = jnum(r.se);
  j["t"] = jnum(r.t);
  j["p"] = jnum(r.p);
  j["ci_lower"] = jnum(r.ci_lower);
  j["ci_upper"] = jnum(r.ci_upper);
  j["significant"] = r.significant;
  return j;
}

inline json segmented_fit_json(const SegmentedFit& fit) {
  json j;
  j["beta"] = {fit.model.beta[0], fit.model.beta[1], fit.model.beta[2], fit.model.beta[3]};
  j["alpha"] = {fit.model.alpha[0], fit.model.alpha[1]};
  j["n"] = fit.n;
  j["df"] = fit.df;
  j["rss"] = fit.rss;
  j["sigma2"] = fit.sigma2;
  j["covariance_ok"] = fit.covariance_ok;
  j["polish_failed"] = fit.polish_failed;
  j["degenerate_breakpoint"] = {fit.degenerate_breakpoint[0], fit.degenerate_breakpoint[1]};
  json rows = json::array();
  for (const auto& r : fit.rows) rows.push_back(inference_row_json(r));
  j["rows"] = std::move(rows);
  j["warnings"] = fit.warnings;
  return j;
}

inline std::string segmented_rows_csv(const SegmentedFit& fit) {
  std::string out = "parameter,estimate,se,t,p,ci_lower,ci_upper,significant\n";
  for (const auto& r : fit.rows)
    out += r.parameter + "," + num(r.estimate) + "," + num(r.se) + "," + num(r.t) + "," +
           num(r.p) + "," + num(r.ci_lower) + "," + num(r.ci_upper) + "," +
           (r.significant ? "true" : "false") + "\n";
  return out;
}

inline const char* status_name(QuantileSegmentedFit::Status s) {
  return s == QuantileSegmentedFit::Status::optimal ? "optimal" : "grid-fallback";
}

inline json quantile_table_json(const QuantileBreakpointTable& t) {
  json j;
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row;
    row["tau"] = r.tau;
    if (r.fit) {
      row["status"] = status_name(r.fit->status);
      row["alpha1"] = r.fit->model.alpha[0];
      row["alpha2"] = r.fit->model.alpha[1];
      row["beta"] = {r.fit->model.beta[0], r.fit->model.beta[1], r.fit->model.beta[2],
                     r.fit->model.beta[3]};
      row["objective"] = r.fit->objective;
      row["residuals"] = {{"negative", r.fit->negative},
                          {"zero", r.fit->zero},
                          {"positive", r.fit->positive}};
    } else {
      row["status"] = "failed";
      row["error"] = r.error;
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  auto iv = [](const BreakpointInterval& b) {
    json x;
    x["lower"] = b.lower;
    x["upper"] = b.upper;
    x["width"] = b.width();
    x["tau_at_lower"] = b.tau_at_lower;
    x["tau_at_upper"] = b.tau_at_upper;
    return x;
  };
  j["intervals"] = {{"alpha1", iv(t.alpha1)}, {"alpha2", iv(t.alpha2)}};
  j["coverage_percent"] = t.coverage_percent;
  j["coverage_label"] = t.coverage_label();
  j["interval_kind"] = "range of breakpoint estimates across the tau grid";
  j["partial"] = t.partial;
  return j;
}

// tau,alpha1,alpha2 rows followed by a '#'-introduced summary block.
inline std::string quantile_table_csv(const QuantileBreakpointTable& t) {
  std::string out = "tau,alpha1,alpha2,status\n";
  for (const auto& r : t.rows) {
    out += num(r.tau) + ",";
    if (r.fit)
      out += num(r.fit->model.alpha[0]) + "," + num(r.fit->model.alpha[1]) + "," +
             status_name(r.fit->status) + "\n";
    else
      out += ",,failed\n";
  }
  out += "# summary coverage=" + t.coverage_label() + (t.partial ? " partial" : "") + "\n";
  out += "parameter,lower,upper,width,tau_at_lower,tau_at_upper\n";
  auto line = [&](const char* name, const BreakpointInterval& b) {
    out += std::string(name) + "," + num(b.lower) + "," + num(b.upper) + "," + num(b.width()) +
           "," + num(b.tau_at_lower) + "," + num(b.tau_at_upper) + "\n";
  };
  line("alpha1", t.alpha1);
  line("alpha2", t.alpha2);
  return out;
}

inline json comparison_json(const ComparisonReport& rep) {
  json j;
  j["gamma"] = rep.gamma;
  j["coverage_label"] = rep.coverage_label;
  json widths = json::array();
  for (const auto& row : rep.widths) {
    json r;
    r["parameter"] = row.parameter;
    json cells = json::array();
    for (const auto& c : row.cells)
      cells.push_back({{"method", c.method},
                       {"lower", c.lower},
                       {"upper", c.upper},
                       {"width", c.width},
                       {"minimum", c.minimum}});
    r["cells"] = std::move(cells);
    r["tie"] = row.tie;
    widths.push_back(std::move(r));
  }
  j["widths"] = std::move(widths);
  json areas = json::array();
  for (const auto& a : rep.areas)
    areas.push_back({{"method", a.method}, {"area", a.area}, {"minimum", a.minimum}});
  j["areas"] = std::move(areas);
  j["area_tie"] = rep.area_tie;
  json wr = json::array();
  for (std::size_t i = 0; i < rep.width_ratios.size(); ++i) {
    const auto& r = rep.width_ratios[i];
    wr.push_back({{"parameter", rep.width_ratio_parameter[i]},
                  {"ratio", r.numerator + "/" + r.denominator},
                  {"value", jnum(r.value)},
                  {"percent", jnum(r.percent())}});
  }
  j["width_ratios"] = std::move(wr);
  json ar = json::array();
  for (const auto& r : rep.area_ratios)
    ar.push_back({{"ratio", r.numerator + "/" + r.denominator},
                  {"value", jnum(r.value)},
                  {"percent", jnum(r.percent())}});
  j["area_ratios"] = std::move(ar);
  return j;
}

inline std::string percent_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

// One row per breakpoint: method,lower,upper,width,minimum blocks side by side.
inline std::string comparison_widths_csv(const ComparisonReport& rep) {
  std::string out = "parameter";
  if (!rep.widths.empty())
    for (const auto& c : rep.widths.front().cells)
      out += "," + c.method + "_lower," + c.method + "_upper," + c.method + "_width";
  out += ",minimum\n";
  for (const auto& row : rep.widths) {
    out += row.parameter;
    std::string mins;
    for (const auto& c : row.cells) {
      out += "," + num(c.lower) + "," + num(c.upper) + "," + num(c.width);
      if (c.minimum) mins += (mins.empty() ? "" : ";") + c.method;
    }
    out += "," + mins + "\n";
  }
  return out;
}

inline std::string comparison_areas_csv(const ComparisonReport& rep) {
  std::string out = "method,area,minimum\n";
  for (const auto& a : rep.areas)
    out += a.method + "," + num(a.area) + "," + (a.minimum ? "true" : "false") + "\n";
  out += "# ratios\nratio,value,percent\n";
  for (const auto& r : rep.area_ratios)
    out += r.numerator + "/" + r.denominator + "," + num(r.value) + "," + percent_text(r.value) +
           "\n";
  return out;
}

// Plain SVG: scatter, shaded bands, centre curve and optional breakpoint
// interval ticks along the x axis.
struct Figure {
  std::string title;
  std::string x_label, y_label;
  const BivariateDataset* data = nullptr;
  struct Layer {
    const PredictionBand* band;
    std::string fill;
    double opacity;
  };
  std::vector<Layer> bands;
  struct Curve {
    std::vector<double> x, y;
    std::string stroke;
    std::string dash;
  };
  std::vector<Curve> curves;
  struct Tick {
    double lower, upper;
    std::string label;
  };
  std::vector<Tick> ticks;
};

inline std::string render_svg(const Figure& fig) {
  constexpr double width = 640, height = 440, left = 60, right = 20, top = 40, bottom = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto extend = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  if (fig.data)
    for (std::size_t i = 0; i < fig.data->size(); ++i) extend(fig.data->xs()[i], fig.data->ys()[i]);
  for (const auto& l : fig.bands)
    for (std::size_t i = 0; i < l.band->x.size(); ++i) {
      extend(l.band->x[i], l.band->lower[i]);
      extend(l.band->x[i], l.band->upper[i]);
    }
  for (const auto& c : fig.curves)
    for (std::size_t i = 0; i < c.x.size(); ++i) extend(c.x[i], c.y[i]);
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (width - left - right); };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * (height - top - bottom); };
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"440\" "
                  "viewBox=\"0 0 640 440\">\n";
  s += "<rect width=\"640\" height=\"440\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + esc(fig.title) +
       "</text>\n";
  for (const auto& l : fig.bands) {
    std::string pts;
    for (std::size_t i = 0; i < l.band->x.size(); ++i)
      pts += f(px(l.band->x[i])) + "," + f(py(l.band->upper[i])) + " ";
    for (std::size_t i = l.band->x.size(); i-- > 0;)
      pts += f(px(l.band->x[i])) + "," + f(py(l.band->lower[i])) + " ";
    s += "<polygon points=\"" + pts + "\" fill=\"" + l.fill + "\" fill-opacity=\"" +
         f(l.opacity) + "\" stroke=\"none\"/>\n";
  }
  for (const auto& c : fig.curves) {
    std::string pts;
    for (std::size_t i = 0; i < c.x.size(); ++i) pts += f(px(c.x[i])) + "," + f(py(c.y[i])) + " ";
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + c.stroke +
         "\" stroke-width=\"1.5\"" + (c.dash.empty() ? "" : " stroke-dasharray=\"" + c.dash + "\"") +
         "/>\n";
  }
  if (fig.data)
    for (std::size_t i = 0; i < fig.data->size(); ++i)
      s += "<circle cx=\"" + f(px(fig.data->xs()[i])) + "\" cy=\"" + f(py(fig.data->ys()[i])) +
           "\" r=\"2.5\" fill=\"black\"/>\n";
  const double axis_y = height - bottom;
  s += "<line x1=\"" + f(left) + "\" y1=\"" + f(axis_y) + "\" x2=\"" + f(width - right) +
       "\" y2=\"" + f(axis_y) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + f(left) + "\" y1=\"" + f(top) + "\" x2=\"" + f(left) + "\" y2=\"" +
       f(axis_y) + "\" stroke=\"black\"/>\n";
  for (std::size_t k = 0; k < fig.ticks.size(); ++k) {
    const auto& t = fig.ticks[k];
    const double y = axis_y - 6.0 - 5.0 * static_cast<double>(k);
    s += "<line x1=\"" + f(px(std::max(t.lower, xmin))) + "\" y1=\"" + f(y) + "\" x2=\"" +
         f(px(std::min(t.upper, xmax))) + "\" y2=\"" + f(y) +
         "\" stroke=\"black\" stroke-width=\"2\"><title>" + esc(t.label) + "</title></line>\n";
  }
  s += "<text x=\"" + f(px(xmin)) + "\" y=\"" + f(axis_y + 16) + "\" font-size=\"11\">" +
       num(xmin) + "</text>\n";
  s += "<text x=\"" + f(px(xmax)) + "\" y=\"" + f(axis_y + 16) +
       "\" text-anchor=\"end\" font-size=\"11\">" + num(xmax) + "</text>\n";
  s += "<text x=\"" + f(left - 4) + "\" y=\"" + f(py(ymax)) +
       "\" text-anchor=\"end\" font-size=\"11\">" + num(ymax) + "</text>\n";
  s += "<text x=\"" + f(left - 4) + "\" y=\"" + f(py(ymin)) +
       "\" text-anchor=\"end\" font-size=\"11\">" + num(ymin) + "</text>\n";
  s += "<text x=\"320\" y=\"" + f(height - 12) + "\" text-anchor=\"middle\" font-size=\"12\">" +
       esc(fig.x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + f(height / 2) + "\" font-size=\"12\" transform=\"rotate(-90 16 " +
       f(height / 2) + ")\" text-anchor=\"middle\">" + esc(fig.y_label) + "</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace breakline::report
