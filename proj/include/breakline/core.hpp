#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace breakline {

// Error hierarchy. The CLI maps each kind onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed files, invalid parameters, extrapolation requests.
class InputError : public Error {
 public:
  using Error::Error;
};

// A fitter could not produce a result on otherwise valid input.
class FitError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string format_double(double v, int precision = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_double(std::string_view text) {
  auto s = trim(text);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace detail

// Per-axis value transform applied at ingestion.
struct Transform {
  enum class Kind { identity, log10, affine };

  Kind kind = Kind::identity;
  double a = 0.0;  // affine offset
  double b = 1.0;  // affine scale

  static Transform identity() { return {}; }
  static Transform log10() { return {Kind::log10, 0.0, 1.0}; }
  static Transform affine(double offset, double scale) { return {Kind::affine, offset, scale}; }

  double apply(double v) const {
    switch (kind) {
      case Kind::identity:
        return v;
      case Kind::log10:
        if (!(v > 0.0))
          throw InputError("log10 transform requires strictly positive values, got " +
                           detail::format_double(v));
        return std::log10(v);
      case Kind::affine:
        return a + b * v;
    }
    return v;
  }

  // Accepts "identity", "log10" or "affine:a,b".
  static Transform parse(std::string_view text) {
    auto s = detail::trim(text);
    if (s == "identity" || s.empty()) return identity();
    if (s == "log10") return log10();
    if (s.rfind("affine:", 0) == 0) {
      auto args = detail::split_csv_line(std::string_view(s).substr(7));
      if (args.size() == 2) {
        auto off = detail::parse_double(args[0]);
        auto scale = detail::parse_double(args[1]);
        if (off && scale) return affine(*off, *scale);
      }
    }
    throw InputError("unrecognized transform '" + s + "' (expected identity, log10 or affine:a,b)");
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::identity:
        return "identity";
      case Kind::log10:
        return "log10";
      case Kind::affine:
        return "affine:" + detail::format_double(a) + "," + detail::format_double(b);
    }
    return "identity";
  }

  friend bool operator==(const Transform&, const Transform&) = default;
};

// Paired (x, y) observations sorted by x. Immutable once built.
class BivariateDataset {
 public:
  BivariateDataset() = default;

  // Validates and stable-sorts by x. `labels` is either empty or one tag per point.
  static BivariateDataset from_points(std::vector<double> xs, std::vector<double> ys,
                                      std::vector<std::string> labels = {},
                                      std::string x_name = "x", std::string y_name = "y") {
    if (xs.size() != ys.size())
      throw InputError("x and y columns differ in length");
    if (xs.empty()) throw InputError("dataset is empty");
    if (!labels.empty() && labels.size() != xs.size())
      throw InputError("label column differs in length from x");
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
        throw InputError("non-finite value at row " + std::to_string(i));
    }

    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return xs[l] < xs[r]; });

    BivariateDataset ds;
    ds.x_name_ = std::move(x_name);
    ds.y_name_ = std::move(y_name);
    ds.xs_.reserve(xs.size());
    ds.ys_.reserve(xs.size());
    for (auto i : order) {
      ds.xs_.push_back(xs[i]);
      ds.ys_.push_back(ys[i]);
      if (!labels.empty()) ds.labels_.push_back(labels[i]);
    }
    ds.source_index_ = std::move(order);
    return ds;
  }

  std::size_t size() const { return xs_.size(); }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  const std::vector<std::string>& labels() const { return labels_; }
  bool has_labels() const { return !labels_.empty(); }
  // Row index in the original input for each sorted point.
  const std::vector<std::size_t>& source_index() const { return source_index_; }
  const std::string& x_name() const { return x_name_; }
  const std::string& y_name() const { return y_name_; }
  const Transform& x_transform() const { return x_transform_; }
  const Transform& y_transform() const { return y_transform_; }

  double x_min() const { return xs_.front(); }
  double x_max() const { return xs_.back(); }

  // Same points with new response values (aligned with the sorted order).
  BivariateDataset with_ys(std::vector<double> ys) const {
    if (ys.size() != xs_.size()) throw InputError("response vector length mismatch");
    BivariateDataset ds = *this;
    ds.ys_ = std::move(ys);
    return ds;
  }

  BivariateDataset with_transforms(Transform xt, Transform yt) const {
    BivariateDataset ds = *this;
    ds.x_transform_ = xt;
    ds.y_transform_ = yt;
    return ds;
  }

  friend bool operator==(const BivariateDataset& l, const BivariateDataset& r) {
    return l.xs_ == r.xs_ && l.ys_ == r.ys_ && l.labels_ == r.labels_ && l.x_name_ == r.x_name_ &&
           l.y_name_ == r.y_name_;
  }

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<std::string> labels_;
  std::vector<std::size_t> source_index_;
  std::string x_name_ = "x";
  std::string y_name_ = "y";
  Transform x_transform_;
  Transform y_transform_;
};

inline BivariateDataset parse_dataset_csv(std::istream& in, const std::string& x_column,
                                          const std::string& y_column,
                                          const std::optional<std::string>& label_column = {},
                                          Transform x_transform = {}, Transform y_transform = {}) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("CSV input is empty (header row required)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);

  auto find_column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto xi = find_column(x_column);
  const auto yi = find_column(y_column);
  std::optional<std::size_t> li;
  if (label_column) li = find_column(*label_column);

  std::vector<double> xs, ys;
  std::vector<std::string> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    auto cell = [&](std::size_t idx, const std::string& name) -> const std::string& {
      if (idx >= cells.size())
        throw InputError("row " + std::to_string(row) + " has no value for column '" + name + "'");
      return cells[idx];
    };
    auto number = [&](std::size_t idx, const std::string& name) {
      auto v = detail::parse_double(cell(idx, name));
      if (!v)
        throw InputError("non-numeric cell '" + cell(idx, name) + "' in column '" + name +
                         "' at row " + std::to_string(row));
      return *v;
    };
    try {
      xs.push_back(x_transform.apply(number(xi, x_column)));
      ys.push_back(y_transform.apply(number(yi, y_column)));
    } catch (const InputError& e) {
      if (std::string_view(e.what()).find("row ") != std::string_view::npos) throw;
      throw InputError(std::string(e.what()) + " at row " + std::to_string(row));
    }
    if (li) labels.push_back(detail::trim(cell(*li, *label_column)));
  }
  if (xs.empty()) throw InputError("dataset is empty");
  return BivariateDataset::from_points(std::move(xs), std::move(ys), std::move(labels), x_column,
                                       y_column)
      .with_transforms(x_transform, y_transform);
}

inline BivariateDataset load_dataset(const std::string& path, const std::string& x_column,
                                     const std::string& y_column,
                                     const std::optional<std::string>& label_column = {},
                                     Transform x_transform = {}, Transform y_transform = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file '" + path + "'");
  return parse_dataset_csv(in, x_column, y_column, label_column, x_transform, y_transform);
}

// Writes the (already transformed) points back as CSV; reloading with identity
// transforms reproduces the dataset exactly.
inline std::string dataset_to_csv(const BivariateDataset& ds) {
  std::string out = detail::csv_escape(ds.x_name()) + "," + detail::csv_escape(ds.y_name());
  if (ds.has_labels()) out += ",label";
  out += "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += detail::format_double(ds.xs()[i]) + "," + detail::format_double(ds.ys()[i]);
    if (ds.has_labels()) out += "," + detail::csv_escape(ds.labels()[i]);
    out += "\n";
  }
  return out;
}

inline nlohmann::ordered_json dataset_to_json(const BivariateDataset& ds) {
  nlohmann::ordered_json j;
  j["x_name"] = ds.x_name();
  j["y_name"] = ds.y_name();
  j["transforms"] = {{"x", ds.x_transform().to_string()}, {"y", ds.y_transform().to_string()}};
  auto points = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    nlohmann::ordered_json p;
    p["x"] = ds.xs()[i];
    p["y"] = ds.ys()[i];
    p["label"] = ds.has_labels() ? nlohmann::ordered_json(ds.labels()[i]) : nullptr;
    points.push_back(std::move(p));
  }
  j["points"] = std::move(points);
  return j;
}

// Envelope of a prediction band sampled on the observed design.
struct PredictionBand {
  std::string method;
  std::vector<double> x;
  std::vector<double> center;
  std::vector<double> lower;
  std::vector<double> upper;
  double gamma = 0.0;
  std::optional<double> area;
  // Design indices where lower > upper (only quantile bands can cross).
  std::vector<std::size_t> crossings;
  std::vector<std::string> warnings;
};

}  // namespace breakline
