#pragma once

// Command-line front end: `resq <command> [flags]`.
//
// Exit codes: 0 success, 1 usage, 2 input/parse, 3 fit/convergence, 4 I/O.

#include <charconv>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>

#include "CLI11.hpp"
#include "resq/pipeline.hpp"

namespace resq::cli {

namespace detail {

inline double parse_number(std::string_view s, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(Errc::usage, "invalid " + what + " '" + std::string(s) + "'");
  }
  return v;
}

inline BinningScheme parse_bins(const std::string& spec) {
  if (spec == "none") return BinningScheme::per_point();
  if (spec.rfind("log:", 0) == 0) {
    const double k = parse_number(std::string_view(spec).substr(4), "--bins value");
    if (k >= 1.0 && k <= 1000.0 && k == static_cast<int>(k)) {
      return BinningScheme::log_spaced(static_cast<int>(k));
    }
  }
  throw Error(Errc::usage, "--bins expects log:<per-decade> with a positive integer, or none");
}

inline AngleWindow parse_window(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw Error(Errc::usage, "--window expects lo:hi");
  }
  AngleWindow w{parse_number(std::string_view(spec).substr(0, colon), "--window bound"),
                parse_number(std::string_view(spec).substr(colon + 1), "--window bound")};
  if (!(w.hi > w.lo)) throw Error(Errc::usage, "--window needs lo < hi");
  return w;
}

inline io::TraceFormat parse_format(const std::string& s) {
  return s == "touchstone" ? io::TraceFormat::touchstone : io::TraceFormat::csv;
}

inline void emit(const io::json& report, const std::string& output, std::ostream& out) {
  if (output.empty() || output == "-") {
    out << io::dump(report);
  } else {
    io::write_file(output, io::dump(report));
  }
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Superconducting resonator and thin-film characterization pipeline", "resq"};
  app.set_version_flag("--version", std::string(pipeline::kToolVersion));
  app.require_subcommand(1);

  std::string input;
  std::string output;
  std::string plot;
  std::string format = "csv";
  std::string bins = "log:5";
  double discard = 0.20;
  std::size_t exclude_top = 0;
  std::string window;
  std::string mode = "theta2theta";
  std::string criterion = "midpoint";
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  bool partial = false;
  bool poisson = false;
  double min_drop = 0.3;
  double phase_tol = 0.5;
  std::string coupling = "magnitude";
  std::string synth_kind;

  const auto formats = CLI::IsMember({"csv", "touchstone"});

  auto* fit = app.add_subcommand("fit-trace", "Fit one complex S21 trace");
  fit->add_option("--input", input, "Trace file")->required();
  fit->add_option("--format", format, "csv or touchstone")->check(formats);
  fit->add_option("--output", output, "Report path (default stdout)");
  fit->add_option("--plot", plot, "SVG of data, fitted circle and |S21|");

  auto* sweep = app.add_subcommand("power-sweep", "Fit every trace of a power sweep and bin by photon number");
  sweep->add_option("--input", input, "Sweep manifest (JSON)")->required();
  auto* sweep_format = sweep->add_option("--format", format, "Override the manifest's trace format")->check(formats);
  sweep->add_option("--output", output, "Report path (default stdout)");
  sweep->add_option("--bins", bins, "log:<per-decade> or none");
  sweep->add_option("--discard-rel-err", discard, "Discard fits whose q_i relative error exceeds this");
  sweep->add_option("--coupling", coupling, "Q_c used for photon number")
      ->check(CLI::IsMember({"magnitude", "real-corrected"}));
  sweep->add_option("--jobs", jobs, "Worker threads (default: hardware concurrency)");
  sweep->add_flag("--partial-results", partial, "Record unreadable traces as discarded instead of aborting");

  auto* tls = app.add_subcommand("tls-fit", "Fit the TLS loss model to an ensemble curve");
  tls->add_option("--input", input, "Curve or power-sweep report (JSON)")->required();
  tls->add_option("--exclude-top", exclude_top, "Drop the k highest-n bins");
  tls->add_option("--output", output, "Report path (default stdout)");
  tls->add_option("--plot", plot, "SVG of <Q_i>(n) with the fitted model");

  auto* xrd = app.add_subcommand("xrd", "Fit a Pseudo-Voigt peak to an XRD scan");
  xrd->add_option("--input", input, "Scan file")->required();
  xrd->add_option("--mode", mode, "theta2theta or rocking")->check(CLI::IsMember({"theta2theta", "rocking"}));
  xrd->add_option("--window", window, "Fit window lo:hi in degrees");
  xrd->add_option("--phase-tolerance", phase_tol, "Phase match tolerance in degrees");
  xrd->add_flag("--poisson-weights", poisson, "Weight residuals by 1/sqrt(I+1)");
  xrd->add_option("--output", output, "Report path (default stdout)");

  auto* tc = app.add_subcommand("tc", "Detect superconducting transitions in R(T)");
  tc->add_option("--input", input, "R(T) file")->required();
  tc->add_option("--criterion", criterion, "midpoint, onset or zero")
      ->check(CLI::IsMember({"midpoint", "onset", "zero"}));
  tc->add_option("--min-drop", min_drop, "Minimum drop in decades");
  tc->add_option("--output", output, "Report path (default stdout)");

  auto* synth = app.add_subcommand("synth", "Generate synthetic data with an oracle sidecar");
  synth->add_option("kind", synth_kind, "trace, sweep, rocking or rt")
      ->required()
      ->check(CLI::IsMember({"trace", "sweep", "rocking", "rt"}));
  synth->add_option("--input", input, "Generator parameters (JSON)")->required();
  synth->add_option("--output", output, "Output directory")->required();
  auto* seed_opt = synth->add_option("--seed", seed, "Noise seed (overrides the params file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code(Errc::usage);
  }

  try {
    io::json report;
    if (*fit) {
      report = pipeline::fit_trace({input, detail::parse_format(format),
                                    plot.empty() ? std::nullopt : std::optional(plot)});
    } else if (*sweep) {
      pipeline::PowerSweepConfig cfg;
      cfg.manifest = input;
      if (sweep_format->count() > 0) cfg.format = detail::parse_format(format);
      cfg.bins = detail::parse_bins(bins);
      cfg.discard_rel_err = discard;
      cfg.coupling = coupling == "magnitude" ? CouplingQConvention::magnitude
                                             : CouplingQConvention::real_corrected;
      cfg.jobs = jobs;
      cfg.partial_results = partial;
      report = pipeline::power_sweep(cfg);
    } else if (*tls) {
      report = pipeline::tls_fit({input, exclude_top, plot.empty() ? std::nullopt : std::optional(plot)});
    } else if (*xrd) {
      pipeline::XrdConfig cfg;
      cfg.input = input;
      cfg.mode = mode == "rocking" ? ScanMode::rocking : ScanMode::theta_2theta;
      if (!window.empty()) cfg.window = detail::parse_window(window);
      cfg.poisson_weights = poisson;
      cfg.phase_tolerance = phase_tol;
      report = pipeline::xrd(cfg);
    } else if (*tc) {
      const TcCriterion c = criterion == "onset" ? TcCriterion::onset
                            : criterion == "zero" ? TcCriterion::zero
                                                  : TcCriterion::midpoint;
      report = pipeline::tc({input, c, min_drop});
    } else if (*synth) {
      pipeline::SynthConfig cfg;
      cfg.kind = synth_kind == "sweep"     ? pipeline::SynthKind::sweep
                 : synth_kind == "rocking" ? pipeline::SynthKind::rocking
                 : synth_kind == "rt"      ? pipeline::SynthKind::rt
                                           : pipeline::SynthKind::trace;
      cfg.params = input;
      cfg.output_dir = output;
      if (seed_opt->count() > 0) cfg.seed = seed;
      pipeline::synth(cfg);
      return 0;
    }
    detail::emit(report, output, out);
    return 0;
  } catch (const Error& e) {
    err << "resq: error: " << pipeline::describe(e) << "\n";
    return exit_code(e.code());
  } catch (const io::json::exception& e) {
    err << "resq: error: parse: " << e.what() << "\n";
    return exit_code(Errc::parse);
  } catch (const std::exception& e) {
    err << "resq: error: " << e.what() << "\n";
    return exit_code(Errc::no_convergence);
  }
}

}  // namespace resq::cli
