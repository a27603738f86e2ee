#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "breakline/cli.hpp"

namespace {

using breakline::cli::Command;
using breakline::cli::RunConfig;

struct Flags {
  std::string x_transform = "identity", y_transform = "identity";
  std::string formats = "json,csv,svg";
  std::string plrm_band = "parametric";
  std::vector<double> beta, alpha, x_range;
  bool equispaced = false;
};

void add_dataset_flags(CLI::App* sub, RunConfig& cfg, Flags& f) {
  sub->add_option("--input", cfg.input, "CSV file, or - for stdin")->required();
  sub->add_option("--x", cfg.x_column, "predictor column")->capture_default_str();
  sub->add_option("--y", cfg.y_column, "response column")->capture_default_str();
  sub->add_option("--label", cfg.label_column, "optional group label column");
  sub->add_option("--x-transform", f.x_transform, "identity | log10 | affine:a,b")
      ->capture_default_str();
  sub->add_option("--y-transform", f.y_transform, "identity | log10 | affine:a,b")
      ->capture_default_str();
}

void add_common_flags(CLI::App* sub, RunConfig& cfg, Flags& f) {
  sub->add_option("--gamma", cfg.gammas, "band confidence coefficient(s)")->delimiter(',');
  sub->add_option("--grid-cells", cfg.grid_cells, "cells for the band-area grid")
      ->capture_default_str();
  sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  sub->add_option("--threads", cfg.threads, "worker threads (0 = all cores)")->capture_default_str();
  sub->add_option("--out", cfg.out_dir, "output directory");
  sub->add_option("--format", f.formats, "comma list of json, csv, svg")->capture_default_str();
}

void add_loess_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--span", cfg.loess.span, "loess span")->capture_default_str();
  sub->add_option("--degree", cfg.loess.degree, "loess local degree (1 or 2)")->capture_default_str();
  sub->add_option("--robust-iters", cfg.loess.robust_iterations, "loess robustness iterations")
      ->capture_default_str();
}

void add_bootstrap_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--bootstrap", cfg.replicates, "bootstrap replicates B")->capture_default_str();
}

void add_segment_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--min-seg-points", cfg.min_seg_points, "minimum points per segment")
      ->capture_default_str();
}

void add_tau_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--tau-grid", cfg.taus, "comma list of quantile levels")->delimiter(',');
}

void apply_formats(const std::string& text, RunConfig& cfg) {
  cfg.want_json = cfg.want_csv = cfg.want_svg = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto item = breakline::detail::trim(text.substr(start, end - start));
    if (item == "json") cfg.want_json = true;
    else if (item == "csv") cfg.want_csv = true;
    else if (item == "svg") cfg.want_svg = true;
    else throw breakline::InputError("unknown output format '" + item + "'");
    start = end + 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Breakpoint estimation for bivariate stress-response data"};
  app.require_subcommand(1);
  RunConfig cfg;
  Flags f;

  auto* loess = app.add_subcommand("loess-band", "bootstrapped loess prediction bands");
  add_dataset_flags(loess, cfg, f);
  add_loess_flags(loess, cfg);
  add_bootstrap_flags(loess, cfg);
  add_common_flags(loess, cfg, f);

  auto* plrm = app.add_subcommand("plrm", "two-breakpoint piecewise linear regression");
  add_dataset_flags(plrm, cfg, f);
  add_segment_flags(plrm, cfg);
  add_loess_flags(plrm, cfg);
  add_bootstrap_flags(plrm, cfg);
  add_common_flags(plrm, cfg, f);
  plrm->add_option("--band", f.plrm_band, "parametric | bootstrap")
      ->check(CLI::IsMember({"parametric", "bootstrap"}))
      ->capture_default_str();

  auto* pqrm = app.add_subcommand("pqrm", "two-breakpoint piecewise linear quantile regression");
  add_dataset_flags(pqrm, cfg, f);
  add_segment_flags(pqrm, cfg);
  add_tau_flags(pqrm, cfg);
  add_common_flags(pqrm, cfg, f);

  auto* compare = app.add_subcommand("compare", "run all three methods and compare them");
  add_dataset_flags(compare, cfg, f);
  add_loess_flags(compare, cfg);
  add_bootstrap_flags(compare, cfg);
  add_segment_flags(compare, cfg);
  add_tau_flags(compare, cfg);
  add_common_flags(compare, cfg, f);
  compare->add_option("--band", f.plrm_band, "PLRM band: parametric | bootstrap")
      ->check(CLI::IsMember({"parametric", "bootstrap"}))
      ->capture_default_str();

  auto* synth = app.add_subcommand("synth", "simulate data from a known segmented truth");
  synth->add_option("--n", cfg.synth.n, "sample size")->capture_default_str();
  synth->add_option("--beta", f.beta, "b0,b1,b2,b3")->delimiter(',')->expected(4);
  synth->add_option("--alpha", f.alpha, "a1,a2")->delimiter(',')->expected(2);
  synth->add_option("--sigma", cfg.synth.sigma, "noise sd at x = 0")->capture_default_str();
  synth->add_option("--wedge", cfg.synth.wedge, "sd grows as sigma (1 + wedge x)")
      ->capture_default_str();
  synth->add_option("--x-range", f.x_range, "lo,hi")->delimiter(',')->expected(2);
  synth->add_flag("--equispaced", f.equispaced, "evenly spaced x instead of uniform draws");
  synth->add_option("--seed", cfg.synth.seed, "random seed")->capture_default_str();
  synth->add_option("--out", cfg.out_dir, "output directory (default: CSV to stdout)");
  synth->add_option("--format", f.formats, "comma list of json, csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return breakline::cli::input_error;
  }

  try {
    if (*loess) cfg.command = Command::loess_band;
    else if (*plrm) cfg.command = Command::plrm;
    else if (*pqrm) cfg.command = Command::pqrm;
    else if (*compare) cfg.command = Command::compare;
    else cfg.command = Command::synth;

    cfg.x_transform = breakline::Transform::parse(f.x_transform);
    cfg.y_transform = breakline::Transform::parse(f.y_transform);
    apply_formats(f.formats, cfg);
    cfg.plrm_band = f.plrm_band == "bootstrap" ? breakline::PlrmBandMode::bootstrap
                                               : breakline::PlrmBandMode::parametric;
    if (!f.beta.empty())
      for (std::size_t i = 0; i < 4; ++i) cfg.synth.truth.beta[i] = f.beta[i];
    if (!f.alpha.empty()) cfg.synth.truth.alpha = {f.alpha[0], f.alpha[1]};
    double lo = 0.0, hi = 1.0;
    if (!f.x_range.empty()) lo = f.x_range[0], hi = f.x_range[1];
    if (f.equispaced)
      cfg.synth.design = breakline::SyntheticSpec::Fixed{breakline::equispaced(cfg.synth.n, lo, hi)};
    else
      cfg.synth.design = breakline::SyntheticSpec::Uniform{lo, hi};
  } catch (const breakline::InputError& e) {
    std::cerr << breakline::cli::detail::error_record("input", breakline::cli::input_error, e.what(),
                                                      cfg.command)
                     .dump()
              << "\n";
    return breakline::cli::input_error;
  }

  return breakline::cli::run(cfg, std::cin, std::cout, std::cerr);
}
