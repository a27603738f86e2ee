#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "breakline/band_area.hpp"
#include "breakline/bootstrap.hpp"
#include "breakline/core.hpp"
#include "breakline/loess.hpp"
#include "breakline/quantile.hpp"
#include "breakline/report.hpp"
#include "breakline/segmented.hpp"
#include "breakline/stats.hpp"
#include "breakline/synthetic.hpp"

namespace breakline::cli {

using json = nlohmann::ordered_json;

enum class Command { loess_band, plrm, pqrm, compare, synth };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::loess_band: return "loess-band";
    case Command::plrm: return "plrm";
    case Command::pqrm: return "pqrm";
    case Command::compare: return "compare";
    case Command::synth: return "synth";
  }
  return "?";
}

enum ExitCode : int { ok = 0, input_error = 2, fit_failure = 3, partial = 4 };

struct RunConfig {
  Command command = Command::compare;

  // dataset; "-" reads stdin
  std::string input;
  std::string x_column = "x";
  std::string y_column = "y";
  std::optional<std::string> label_column;
  Transform x_transform, y_transform;

  LoessConfig loess;
  std::size_t replicates = 10000;
  std::vector<double> gammas;  // empty: per-command default
  std::vector<double> taus = default_tau_grid();
  std::size_t grid_cells = 10000;
  std::size_t min_seg_points = 3;
  std::uint64_t seed = 20190101;
  unsigned threads = 1;
  PlrmBandMode plrm_band = PlrmBandMode::parametric;

  std::string out_dir;  // empty: synth prints to stdout, others write nothing
  bool want_json = true, want_csv = true, want_svg = true;

  SyntheticSpec synth;
};

inline std::vector<double> effective_gammas(const RunConfig& cfg) {
  if (!cfg.gammas.empty()) return cfg.gammas;
  switch (cfg.command) {
    case Command::loess_band:
    case Command::plrm: return {0.80, 0.95};
    default: return {0.80};
  }
}

inline void validate(const RunConfig& cfg) {
  for (double g : effective_gammas(cfg))
    if (!(g > 0.0 && g < 1.0)) throw InputError("gamma must lie in (0, 1)");
  if (cfg.command == Command::compare && effective_gammas(cfg).size() != 1)
    throw InputError("compare takes a single gamma");
  for (std::size_t i = 0; i < cfg.taus.size(); ++i) {
    if (!(cfg.taus[i] > 0.0 && cfg.taus[i] < 1.0)) throw InputError("tau values must lie in (0, 1)");
    if (i > 0 && !(cfg.taus[i] > cfg.taus[i - 1]))
      throw InputError("tau grid must be strictly increasing");
  }
  if (cfg.taus.size() < 2 && (cfg.command == Command::pqrm || cfg.command == Command::compare))
    throw InputError("tau grid needs at least two values");
  if (cfg.grid_cells < 1) throw InputError("grid cells must be at least 1");
  if (cfg.min_seg_points < 1) throw InputError("min points per segment must be at least 1");
  if (cfg.command != Command::synth && cfg.input.empty()) throw InputError("--input is required");
}

struct Artifact {
  std::string name;
  std::string content;
};

struct RunResult {
  int exit_code = ok;
  std::vector<Artifact> files;
  bool quarantined = false;  // files belong under quarantine/
  std::optional<json> error;
  std::string stdout_text;
};

namespace detail {

inline std::string gamma_tag(double g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::round(g * 1e6) / 1e4);
  return buf;
}


struct Session {
  const RunConfig& cfg;
  std::istream* in;
  RunResult& result;
  json failed_rows = json::array();

  void add(std::string name, std::string content) {
    result.files.push_back({std::move(name), std::move(content)});
  }
  void add_json(const std::string& name, const json& j) {
    if (cfg.want_json) add(name, j.dump(2) + "\n");
  }
  void add_csv(const std::string& name, std::string content) {
    if (cfg.want_csv || cfg.want_svg) add(name, std::move(content));
  }
  void add_svg(const std::string& name, std::string content) {
    if (cfg.want_svg) add(name, std::move(content));
  }

  BivariateDataset load() const {
    if (cfg.input == "-") {
      if (!in) throw InputError("no standard input available");
      return parse_dataset_csv(*in, cfg.x_column, cfg.y_column, cfg.label_column, cfg.x_transform,
                               cfg.y_transform);
    }
    return load_dataset(cfg.input, cfg.x_column, cfg.y_column, cfg.label_column, cfg.x_transform,
                        cfg.y_transform);
  }

  BandConfig band_config(double gamma) const {
    BandConfig b;
    b.replicates = cfg.replicates;
    b.gamma = gamma;
    b.seed = cfg.seed;
    b.threads = cfg.threads;
    return b;
  }

  SegmentedOptions segmented_options() const {
    SegmentedOptions o;
    o.min_points_per_segment = cfg.min_seg_points;
    o.loess = cfg.loess;
    o.threads = cfg.threads;
    return o;
  }

  QuantileOptions quantile_options() const {
    QuantileOptions o;
    o.min_points_per_segment = cfg.min_seg_points;
    o.threads = cfg.threads;
    return o;
  }

  AreaConfig area_config() const { return {cfg.grid_cells, AreaConfig::Mode::grid}; }

  double max_gamma(const std::vector<double>& gammas) const {
    double m = 0.0;
    for (double g : gammas) m = std::max(m, g);
    return m;
  }

  void emit_summary(const BivariateDataset& ds) {
    add_json("summary.json", report::summary_json(summarize(ds), ds));
  }

  json band_entry(const PredictionBand& band) const {
    json j;
    j["gamma"] = band.gamma;
    j["area"] = band.area ? report::jnum(*band.area) : json(nullptr);
    j["area_exact"] = band_area(band, {cfg.grid_cells, AreaConfig::Mode::exact}).area;
    if (!band.crossings.empty()) j["crossings"] = band.crossings;
    if (!band.warnings.empty()) j["warnings"] = band.warnings;
    return j;
  }

  // --- loess ---------------------------------------------------------------

  std::vector<PredictionBand> loess_bands(const BivariateDataset& ds,
                                          const std::vector<double>& gammas) {
    const auto lf = fit_loess(ds, cfg.loess);
    std::string fit_csv = "x,y,fitted,residual,robustness\n";
    for (std::size_t i = 0; i < lf.xs.size(); ++i)
      fit_csv += report::num(lf.xs[i]) + "," + report::num(lf.ys[i]) + "," +
                 report::num(lf.fitted[i]) + "," + report::num(lf.residuals[i]) + "," +
                 report::num(lf.robustness[i]) + "\n";
    if (cfg.want_csv) add("loess_fit.csv", std::move(fit_csv));

    const auto pool =
        bootstrap_pool(ds.xs(), ds.ys(), loess_mean_fitter(cfg.loess), band_config(max_gamma(gammas)));
    std::vector<PredictionBand> bands;
    json meta;
    meta["method"] = "BL";
    meta["loess"] = {{"span", cfg.loess.span},
                     {"degree", cfg.loess.degree},
                     {"robust_iterations", cfg.loess.robust_iterations}};
    meta["B"] = cfg.replicates;
    meta["seed"] = cfg.seed;
    meta["bands"] = json::array();
    for (double g : gammas) {
      auto band = pool.band(g, "BL");
      attach_area(band, area_config());
      add_csv("loess_band_" + gamma_tag(g) + ".csv",
              report::band_csv(band, report::band_header(band, cfg.replicates, cfg.seed)));
      meta["bands"].push_back(band_entry(band));
      bands.push_back(std::move(band));
    }
    add_json("loess_band.json", meta);

    report::Figure fig;
    fig.title = "Bootstrapped loess";
    fig.x_label = ds.x_name();
    fig.y_label = ds.y_name();
    fig.data = &ds;
    add_band_layers(fig, bands, "#3b6ea5");
    fig.curves.push_back({bands.front().x, bands.front().center, "#1f3b5a", ""});
    add_svg("loess_band.svg", report::render_svg(fig));
    return bands;
  }

  static void add_band_layers(report::Figure& fig, const std::vector<PredictionBand>& bands,
                              const std::string& fill) {
    // Widest band first so narrower ones stay visible on top.
    std::vector<const PredictionBand*> order;
    for (const auto& b : bands) order.push_back(&b);
    std::stable_sort(order.begin(), order.end(),
                     [](auto* a, auto* b) { return a->gamma > b->gamma; });
    for (auto* b : order) fig.bands.push_back({b, fill, 0.25});
  }

  // --- plrm ----------------------------------------------------------------

  struct PlrmOutput {
    SegmentedFit fit;
    std::vector<PredictionBand> bands;
  };

  PlrmOutput plrm(const BivariateDataset& ds, const std::vector<double>& gammas) {
    PlrmOutput out;
    const auto opt = segmented_options();
    out.fit = fit_segmented(ds, opt);
    auto& fit = out.fit;

    std::vector<std::string> band_warnings;
    if (cfg.plrm_band == PlrmBandMode::parametric && fit.covariance_ok) {
      for (double g : gammas) out.bands.push_back(plrm_parametric_band(fit, ds.xs(), g));
    } else {
      if (cfg.plrm_band == PlrmBandMode::parametric)
        band_warnings.push_back("covariance not positive definite; bootstrap band used instead");
      const auto pool =
          bootstrap_pool(ds.xs(), ds.ys(), segmented_mean_fitter(opt), band_config(max_gamma(gammas)));
      for (double g : gammas) {
        out.bands.push_back(pool.band(g, "PLRM"));
        out.bands.back().warnings = band_warnings;
      }
    }
    const bool boot = cfg.plrm_band == PlrmBandMode::bootstrap || !fit.covariance_ok;

    json j = report::segmented_fit_json(fit);
    json bands = json::array();
    for (auto& band : out.bands) {
      attach_area(band, area_config());
      add_csv("plrm_band_" + gamma_tag(band.gamma) + ".csv",
              report::band_csv(band, report::band_header(
                                         band, boot ? std::optional(cfg.replicates) : std::nullopt,
                                         boot ? std::optional(cfg.seed) : std::nullopt)));
      json e = band_entry(band);
      e["kind"] = boot ? "bootstrap" : "parametric";
      bands.push_back(std::move(e));
    }
    j["bands"] = std::move(bands);
    add_json("plrm_fit.json", j);
    if (cfg.want_csv) add("plrm_fit.csv", report::segmented_rows_csv(fit));

    report::Figure fig;
    fig.title = "Piecewise linear regression";
    fig.x_label = ds.x_name();
    fig.y_label = ds.y_name();
    fig.data = &ds;
    add_band_layers(fig, out.bands, "#a5573b");
    fig.curves.push_back({out.bands.front().x, out.bands.front().center, "#5a2a1f", ""});
    for (std::size_t r = 0; r < 2 && r < fit.rows.size(); ++r)
      fig.ticks.push_back({fit.rows[r].ci_lower, fit.rows[r].ci_upper,
                           fit.rows[r].parameter + " 95% CI"});
    add_svg("plrm.svg", report::render_svg(fig));
    return out;
  }

  // --- pqrm ----------------------------------------------------------------

  struct PqrmOutput {
    QuantileBreakpointTable table;
    std::vector<PredictionBand> bands;
  };

  // `init` is a least-squares fit whose breakpoints seed the candidate search.
  PqrmOutput pqrm(const BivariateDataset& ds, const std::vector<double>& gammas,
                  std::optional<SegmentedModel> init = std::nullopt) {
    PqrmOutput out;
    auto opt = quantile_options();
    opt.init = init;
    out.table = quantile_breakpoint_intervals(fit_quantile_grid(ds, cfg.taus, opt));
    for (const auto& r : out.table.rows)
      if (!r.fit) failed_rows.push_back({{"tau", r.tau}, {"message", r.error}});

    std::vector<QuantileSegmentedFit> extra;
    auto fit_at = [&](double tau) -> const QuantileSegmentedFit& {
      for (const auto& r : out.table.rows)
        if (r.fit && std::abs(r.tau - tau) < 1e-9) return *r.fit;
      for (const auto& f : extra)
        if (std::abs(f.tau - tau) < 1e-9) return f;
      extra.push_back(fit_segmented_quantile(ds, tau, opt));
      return extra.back();
    };
    for (double g : gammas) {
      // Fit every needed tau before taking references into `extra`.
      for (double t : {(1.0 - g) / 2.0, 0.5, (1.0 + g) / 2.0}) fit_at(t);
    }
    for (double g : gammas) {
      auto band = pqrm_prediction_band(fit_at((1.0 - g) / 2.0), fit_at(0.5), fit_at((1.0 + g) / 2.0),
                                       ds.xs(), g);
      attach_area(band, area_config());
      out.bands.push_back(std::move(band));
    }

    json j = report::quantile_table_json(out.table);
    json bands = json::array();
    for (const auto& band : out.bands) {
      add_csv("pqrm_band_" + gamma_tag(band.gamma) + ".csv",
              report::band_csv(band, report::band_header(band, std::nullopt, std::nullopt)));
      json e = band_entry(band);
      e["taus"] = {(1.0 - band.gamma) / 2.0, 0.5, (1.0 + band.gamma) / 2.0};
      bands.push_back(std::move(e));
    }
    j["bands"] = std::move(bands);
    add_json("pqrm_fits.json", j);
    if (cfg.want_csv) add("pqrm_breakpoints.csv", report::quantile_table_csv(out.table));

    report::Figure fig;
    fig.title = "Piecewise linear quantile regression";
    fig.x_label = ds.x_name();
    fig.y_label = ds.y_name();
    fig.data = &ds;
    add_band_layers(fig, out.bands, "#3ba557");
    fig.curves.push_back({out.bands.front().x, out.bands.front().center, "#1f5a2a", ""});
    const auto label = out.table.coverage_label();
    fig.ticks.push_back({out.table.alpha1.lower, out.table.alpha1.upper, "alpha1 " + label});
    fig.ticks.push_back({out.table.alpha2.lower, out.table.alpha2.upper, "alpha2 " + label});
    add_svg("pqrm.svg", report::render_svg(fig));
    return out;
  }

  // --- commands --------------------------------------------------------------

  int run_loess_band() {
    const auto ds = load();
    emit_summary(ds);
    loess_bands(ds, effective_gammas(cfg));
    return ok;
  }

  int run_plrm() {
    const auto ds = load();
    emit_summary(ds);
    plrm(ds, effective_gammas(cfg));
    return ok;
  }

  int run_pqrm() {
    const auto ds = load();
    emit_summary(ds);
    std::optional<SegmentedModel> init;
    try {
      init = fit_segmented(ds, segmented_options()).model;
    } catch (const FitError&) {
    }
    const auto out = pqrm(ds, effective_gammas(cfg), init);
    return out.table.partial ? partial : ok;
  }

  int run_compare() {
    const auto ds = load();
    emit_summary(ds);
    const std::vector<double> gammas = effective_gammas(cfg);
    const auto bl = loess_bands(ds, gammas);
    const auto pl = plrm(ds, gammas);
    const auto pq = pqrm(ds, gammas, pl.fit.model);

    // PLRM breakpoint intervals are taken at the coverage the tau grid implies.
    const double level = pq.table.coverage_percent / 100.0;
    if (!(level > 0.0 && level < 1.0)) throw InputError("tau grid implies no usable coverage");
    LabeledIntervals plrm_iv{"PLRM", pq.table.coverage_label(), pl.fit.interval(0, level),
                             pl.fit.interval(1, level)};
    LabeledIntervals pqrm_iv{"PQRM", pq.table.coverage_label(),
                             std::pair{pq.table.alpha1.lower, pq.table.alpha1.upper},
                             std::pair{pq.table.alpha2.lower, pq.table.alpha2.upper}};
    const auto rep = compare_methods(
        {{"BL", bl.front()}, {"PLRM", pl.bands.front()}, {"PQRM", pq.bands.front()}},
        {plrm_iv, pqrm_iv}, area_config());

    json j = report::comparison_json(rep);
    j["plrm_interval_level"] = level;
    add_json("comparison.json", j);
    if (cfg.want_csv) {
      add("comparison_widths.csv", report::comparison_widths_csv(rep));
      add("comparison_areas.csv", report::comparison_areas_csv(rep));
    }

    report::Figure fig;
    fig.title = "Prediction bands, gamma = " + report::num(gammas.front());
    fig.x_label = ds.x_name();
    fig.y_label = ds.y_name();
    fig.data = &ds;
    fig.bands.push_back({&bl.front(), "#3b6ea5", 0.2});
    fig.bands.push_back({&pl.bands.front(), "#a5573b", 0.2});
    fig.bands.push_back({&pq.bands.front(), "#3ba557", 0.2});
    fig.curves.push_back({bl.front().x, bl.front().center, "#1f3b5a", ""});
    fig.curves.push_back({pl.bands.front().x, pl.bands.front().center, "#5a2a1f", "6 3"});
    fig.curves.push_back({pq.bands.front().x, pq.bands.front().center, "#1f5a2a", "2 2"});
    add_svg("compare.svg", report::render_svg(fig));
    return pq.table.partial ? partial : ok;
  }

  int run_synth() {
    const auto ds = generate(cfg.synth);
    std::string csv = dataset_to_csv(ds);
    if (cfg.out_dir.empty() || cfg.out_dir == "-") {
      result.stdout_text = std::move(csv);
      return ok;
    }
    add("synthetic.csv", std::move(csv));
    const auto& s = cfg.synth;
    json j;
    j["beta"] = {s.truth.beta[0], s.truth.beta[1], s.truth.beta[2], s.truth.beta[3]};
    j["alpha"] = {s.truth.alpha[0], s.truth.alpha[1]};
    j["n"] = ds.size();
    if (const auto* u = std::get_if<SyntheticSpec::Uniform>(&s.design))
      j["design"] = {{"kind", "uniform"}, {"lo", u->lo}, {"hi", u->hi}};
    else
      j["design"] = {{"kind", "fixed"}};
    j["sigma"] = s.sigma;
    j["wedge"] = s.wedge;
    j["seed"] = s.seed;
    add_json("synthetic.json", j);
    return ok;
  }
};

inline json error_record(const char* kind, int code, const std::string& message, Command cmd) {
  json j;
  j["error"] = kind;
  j["exit_code"] = code;
  j["command"] = command_name(cmd);
  j["message"] = message;
  return j;
}

}  // namespace detail

// Runs a command entirely in memory; nothing touches the filesystem except
// reading the input dataset.
inline RunResult execute(const RunConfig& cfg, std::istream* in = nullptr) {
  RunResult result;
  detail::Session s{cfg, in, result};
  try {
    validate(cfg);
    switch (cfg.command) {
      case Command::loess_band: result.exit_code = s.run_loess_band(); break;
      case Command::plrm: result.exit_code = s.run_plrm(); break;
      case Command::pqrm: result.exit_code = s.run_pqrm(); break;
      case Command::compare: result.exit_code = s.run_compare(); break;
      case Command::synth: result.exit_code = s.run_synth(); break;
    }
    if (result.exit_code == partial) {
      result.error = detail::error_record("partial", partial, "some tau rows failed", cfg.command);
      (*result.error)["failed_rows"] = s.failed_rows;
      result.quarantined = true;
    }
  } catch (const InputError& e) {
    result.exit_code = input_error;
    result.error = detail::error_record("input", input_error, e.what(), cfg.command);
  } catch (const FitError& e) {
    result.exit_code = fit_failure;
    result.error = detail::error_record("fit", fit_failure, e.what(), cfg.command);
  } catch (const std::exception& e) {
    result.exit_code = fit_failure;
    result.error = detail::error_record("internal", fit_failure, e.what(), cfg.command);
  }
  if (result.error && !result.files.empty()) result.quarantined = true;
  return result;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InputError("cannot write " + p.string());
  f << content;
  if (!f) throw InputError("cannot write " + p.string());
}

// Writes the artifacts of `result` under `out_dir` (quarantine/ for partial
// or failed runs) plus error.json when the run failed.
inline void write_result(const RunResult& result, const std::string& out_dir) {
  if (out_dir.empty() || out_dir == "-") return;
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  const fs::path dir = result.quarantined ? root / "quarantine" : root;
  fs::create_directories(dir);
  for (const auto& f : result.files) write_file(dir / f.name, f.content);
  if (result.error) write_file(root / "error.json", result.error->dump(2) + "\n");
}

inline int run(const RunConfig& cfg, std::istream& in, std::ostream& out, std::ostream& err) {
  RunResult result = execute(cfg, &in);
  try {
    write_result(result, cfg.out_dir);
  } catch (const std::exception& e) {
    err << detail::error_record("output", input_error, e.what(), cfg.command).dump() << "\n";
    return input_error;
  }
  out << result.stdout_text;
  if (result.error) err << result.error->dump() << "\n";
  return result.exit_code;
}

}  // namespace breakline::cli
