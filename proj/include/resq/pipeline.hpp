#pragma once

// Batch commands behind the CLI. Each command reads its inputs, runs one
// analysis and returns a JSON report carrying a provenance block (tool
// version, effective configuration, its SHA-256, input digests, seeds).

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "resq/circle_fit.hpp"
#include "resq/core_model.hpp"
#include "resq/io.hpp"
#include "resq/svg.hpp"
#include "resq/synth.hpp"
#include "resq/tls_analysis.hpp"
#include "resq/transport_analysis.hpp"
#include "resq/xrd_analysis.hpp"

#ifndef RESQ_VERSION
#define RESQ_VERSION "0.1.0"
#endif

namespace resq::pipeline {

using io::json;
namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = RESQ_VERSION;

inline constexpr const char* kErrorMetricNote =
    "q_i_rel_error is the standard error of q_i divided by q_i, propagated from the "
    "covariance of the joint seven-parameter fit; this interpretation of the fit-error "
    "metric is a design decision";

struct InputDigest {
  std::string path;
  std::string sha256;
};

inline json provenance(const json& config, const std::vector<InputDigest>& inputs,
                       const json& seeds = json::array()) {
  json in = json::array();
  for (const auto& d : inputs) in.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return {{"tool", "resq"},
          {"version", kToolVersion},
          {"config", config},
          {"config_hash", io::sha256_hex(config.dump())},
          {"inputs", in},
          {"seeds", seeds}};
}

/// Runs fn(i) for i in [0, n) on at most `jobs` threads (0 = hardware
/// concurrency). fn must not throw.
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (n == 0) return;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  std::vector<std::jthread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
}

inline std::string describe(const Error& e) {
  std::string s(to_string(e.code()));
  if (!e.stage().empty()) s += " in stage " + e.stage();
  return s + ": " + e.what();
}

inline std::string format_name(io::TraceFormat f) {
  return f == io::TraceFormat::csv ? "csv" : "touchstone";
}

inline std::string bins_name(const BinningScheme& b) {
  return b.kind == BinningScheme::Kind::per_point ? "none" : "log:" + std::to_string(b.per_decade);
}

// ---------------------------------------------------------------------------

struct FitTraceConfig {
  std::string input;
  io::TraceFormat format = io::TraceFormat::csv;
  std::optional<std::string> plot;
};

inline json fit_trace(const FitTraceConfig& cfg) {
  const std::string text = io::read_file(cfg.input);
  const auto trace = cfg.format == io::TraceFormat::csv ? io::parse_trace_csv(text, cfg.input)
                                                        : io::parse_touchstone(text, cfg.input);
  const auto result = fit_resonance(trace);
  if (cfg.plot) io::write_file(*cfg.plot, svg::resonance_plot(trace, result.params));
  const json config = {{"command", "fit-trace"},
                       {"input", cfg.input},
                       {"format", format_name(cfg.format)},
                       {"plot", cfg.plot ? json(*cfg.plot) : json(nullptr)}};
  return {{"result", io::to_json(result)},
          {"error_metric", kErrorMetricNote},
          {"provenance", provenance(config, {{cfg.input, io::sha256_hex(text)}})}};
}

// ---------------------------------------------------------------------------

struct PowerSweepConfig {
  std::string manifest;
  std::optional<io::TraceFormat> format;  // overrides the manifest's format
  BinningScheme bins = BinningScheme::log_spaced(5);
  double discard_rel_err = 0.20;
  CouplingQConvention coupling = CouplingQConvention::magnitude;
  unsigned jobs = 0;
  bool partial_results = false;
};

inline json power_sweep(const PowerSweepConfig& cfg) {
  if (!(cfg.discard_rel_err >= 0.0)) {
    throw Error(Errc::usage, "--discard-rel-err must be >= 0");
  }
  const std::string manifest_text = io::read_file(cfg.manifest);
  const auto manifest = io::manifest_from_json(io::parse_json(manifest_text, cfg.manifest));
  const auto format = cfg.format.value_or(manifest.format);
  const fs::path base = fs::path(cfg.manifest).parent_path();
  const std::size_t n = manifest.traces.size();

  std::vector<InputDigest> digests{{cfg.manifest, io::sha256_hex(manifest_text)}};
  std::vector<std::optional<ComplexTransmissionTrace>> traces(n);
  std::vector<std::string> failure(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto path = (base / manifest.traces[i].path).string();
    try {
      const std::string text = io::read_file(path);
      digests.push_back({manifest.traces[i].path, io::sha256_hex(text)});
      traces[i] = format == io::TraceFormat::csv ? io::parse_trace_csv(text, path)
                                                 : io::parse_touchstone(text, path);
    } catch (const Error& e) {
      if (!cfg.partial_results) throw;
      failure[i] = "unreadable trace: " + describe(e);
    }
  }

  std::vector<std::optional<ResonatorFitResult>> fits(n);
  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    if (!traces[i]) return;
    try {
      fits[i] = fit_resonance(*traces[i]);
    } catch (const Error& e) {
      failure[i] = "fit failed: " + describe(e);
    } catch (const std::exception& e) {
      failure[i] = std::string("fit failed: ") + e.what();
    }
  });

  const AttenuationChain chain{manifest.attenuators};
  json results = json::array();
  json discarded = json::array();
  json warnings = json::array();
  std::vector<PhotonPoint> points;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& entry = manifest.traces[i];
    if (!fits[i]) {
      discarded.push_back({{"path", entry.path}, {"vna_power_dbm", entry.vna_power_dbm}, {"reason", failure[i]}});
      continue;
    }
    const auto& fit = *fits[i];
    if (!(fit.q_i_rel_error <= cfg.discard_rel_err)) {
      discarded.push_back({{"path", entry.path},
                           {"vna_power_dbm", entry.vna_power_dbm},
                           {"reason", "q_i relative error " + io::format_double(fit.q_i_rel_error) +
                                          " exceeds threshold " + io::format_double(cfg.discard_rel_err)},
                           {"fit", io::to_json(fit)}});
      continue;
    }
    const double p_in = input_power(entry.vna_power_dbm, chain);
    const auto& p = fit.params;
    const double n_photons =
        photon_number(p_in, p.f_r, p.q_l, coupling_q(p.q_c_mag, p.phi, cfg.coupling));
    json rec = {{"path", entry.path},
                {"vna_power_dbm", entry.vna_power_dbm},
                {"p_in_w", p_in},
                {"n", n_photons},
                {"fit", io::to_json(fit)}};
    if (manifest.temperature_k) {
      const double ratio = thermal_validity(p.f_r, *manifest.temperature_k);
      rec["thermal_ratio"] = ratio;
      if (ratio < kThermalWarningRatio) {
        warnings.push_back(entry.path + ": hbar*omega/(k_B*T) = " + io::format_double(ratio) +
                           " is below " + io::format_double(kThermalWarningRatio) +
                           "; thermal photons are not negligible");
      }
    }
    results.push_back(rec);
    points.push_back({n_photons, fit.q_i, fit.q_i_rel_error});
  }

  const auto curve = bin_by_photon(points, cfg.bins);
  json tls = nullptr;
  json tls_fit = nullptr;
  if (!curve.bins.empty()) {
    try {
      const auto f = fit_tls(curve);
      tls = io::to_json(f.params);
      tls_fit = {{"non_identifiable", f.non_identifiable},
                 {"warnings", f.warnings},
                 {"iterations", f.iterations},
                 {"starts", f.starts},
                 {"weighted_rss", f.weighted_rss}};
    } catch (const Error& e) {
      warnings.push_back("TLS fit failed: " + describe(e));
    }
  } else {
    warnings.push_back("no trace passed the error filter; ensemble curve is empty");
  }

  const json config = {{"command", "power-sweep"},
                       {"manifest", cfg.manifest},
                       {"format", format_name(format)},
                       {"bins", bins_name(cfg.bins)},
                       {"discard_rel_err", cfg.discard_rel_err},
                       {"coupling", cfg.coupling == CouplingQConvention::magnitude ? "magnitude" : "real-corrected"},
                       {"jobs", cfg.jobs},
                       {"partial_results", cfg.partial_results}};
  return {{"resonator_id", manifest.resonator_id},
          {"results", results},
          {"discarded", discarded},
          {"curve", io::to_json(curve)},
          {"tls_params", tls},
          {"tls_fit", tls_fit},
          {"warnings", warnings},
          {"error_metric", kErrorMetricNote},
          {"provenance", provenance(config, digests)}};
}

// ---------------------------------------------------------------------------

struct TlsFitConfig {
  std::string input;
  std::size_t exclude_top = 0;
  std::optional<std::string> plot;
};

inline json tls_fit(const TlsFitConfig& cfg) {
  const std::string text = io::read_file(cfg.input);
  const auto curve = io::curve_from_json(io::parse_json(text, cfg.input));
  const auto used = exclude_nonlinear(curve, cfg.exclude_top);
  if (used.bins.empty()) {
    throw Error(Errc::empty_result, "curve has no bins to fit");
  }
  const auto fit = fit_tls(used);
  if (cfg.plot) io::write_file(*cfg.plot, svg::tls_plot(used, fit.params));
  const auto [q_low, q_low_std] = low_power_q(used, 1.0);
  const json config = {{"command", "tls-fit"},
                       {"input", cfg.input},
                       {"exclude_top", cfg.exclude_top},
                       {"plot", cfg.plot ? json(*cfg.plot) : json(nullptr)}};
  return {{"tls_params", io::to_json(fit.params)},
          {"non_identifiable", fit.non_identifiable},
          {"warnings", fit.warnings},
          {"bins_total", curve.bins.size()},
          {"excluded_top", cfg.exclude_top},
          {"bins_used", used.bins.size()},
          {"curve", io::to_json(used)},
          {"low_power_q", {{"target_n", 1.0}, {"mean_q_i", q_low}, {"std_q_i", q_low_std}}},
          {"iterations", fit.iterations},
          {"starts", fit.starts},
          {"weighted_rss", fit.weighted_rss},
          {"provenance", provenance(config, {{cfg.input, io::sha256_hex(text)}})}};
}

// ---------------------------------------------------------------------------

struct XrdConfig {
  std::string input;
  ScanMode mode = ScanMode::theta_2theta;
  AngleWindow window;
  bool poisson_weights = false;
  double phase_tolerance = 0.5;
};

inline std::string mode_name(ScanMode m) { return m == ScanMode::theta_2theta ? "theta2theta" : "rocking"; }

inline json xrd(const XrdConfig& cfg) {
  const std::string text = io::read_file(cfg.input);
  auto scan = io::parse_scan_csv(text, cfg.input);
  scan.mode = cfg.mode;
  validate(scan);
  const double peak_counts = scan.intensities.empty()
                                 ? 0.0
                                 : *std::max_element(scan.intensities.begin(), scan.intensities.end());
  PeakFitOptions opt;
  opt.poisson_weights = cfg.poisson_weights;
  const auto fit = fit_peak(normalize_scan(scan), cfg.window, opt);
  json phase = nullptr;
  if (cfg.mode == ScanMode::theta_2theta) phase = to_string(identify_phase(fit.params.center, cfg.phase_tolerance));
  const json config = {{"command", "xrd"},
                       {"input", cfg.input},
                       {"mode", mode_name(cfg.mode)},
                       {"window", {{"lo", io::detail::num(cfg.window.lo)}, {"hi", io::detail::num(cfg.window.hi)}}},
                       {"poisson_weights", cfg.poisson_weights},
                       {"phase_tolerance", cfg.phase_tolerance}};
  return {{"peak", io::to_json(fit.params)},
          {"width_convention", "fwhm (full width at half maximum of the fitted profile, degrees)"},
          {"normalization", peak_counts},
          {"phase", phase},
          {"non_identifiable", fit.non_identifiable},
          {"warnings", fit.warnings},
          {"provenance", provenance(config, {{cfg.input, io::sha256_hex(text)}})}};
}

// ---------------------------------------------------------------------------

struct TcConfig {
  std::string input;
  TcCriterion criterion = TcCriterion::midpoint;
  double min_drop_decades = 0.3;
};

inline std::string criterion_name(TcCriterion c) {
  switch (c) {
    case TcCriterion::midpoint: return "midpoint";
    case TcCriterion::onset: return "onset";
    case TcCriterion::zero: return "zero";
  }
  return "midpoint";
}

inline json tc(const TcConfig& cfg) {
  const std::string text = io::read_file(cfg.input);
  const auto trace = io::parse_rt_csv(text, cfg.input);
  const auto report = detect_transitions(trace, cfg.min_drop_decades);
  json t_c = nullptr;
  if (!report.transitions.empty()) t_c = critical_temperature(trace, cfg.criterion, cfg.min_drop_decades);
  const json config = {{"command", "tc"},
                       {"input", cfg.input},
                       {"criterion", criterion_name(cfg.criterion)},
                       {"min_drop_decades", cfg.min_drop_decades}};
  json out = io::to_json(report);
  out["criterion"] = criterion_name(cfg.criterion);
  out["t_c"] = t_c;
  out["provenance"] = provenance(config, {{cfg.input, io::sha256_hex(text)}});
  return out;
}

// ---------------------------------------------------------------------------

enum class SynthKind { trace, sweep, rocking, rt };

struct SynthConfig {
  SynthKind kind = SynthKind::trace;
  std::string params;
  std::string output_dir;
  std::optional<std::uint64_t> seed;  // overrides noise.seed in the params file
};

namespace detail {

/// Either an explicit list under `key` or {start, stop, count} under `range_key`.
inline std::vector<double> grid_from_json(const json& j, const char* key, const char* range_key) {
  if (j.contains(key)) {
    std::vector<double> v;
    for (const auto& x : j.at(key)) {
      if (!x.is_number()) throw Error(Errc::parse, std::string("'") + key + "' must hold numbers");
      v.push_back(x.get<double>());
    }
    return v;
  }
  if (j.contains(range_key)) {
    const auto& r = j.at(range_key);
    const auto count = r.value("count", std::size_t{0});
    if (count < 1) throw Error(Errc::parse, std::string("'") + range_key + ".count' must be >= 1");
    return linear_grid(io::detail::get_num(r, "start"), io::detail::get_num(r, "stop"), count);
  }
  throw Error(Errc::parse, std::string("params need '") + key + "' or '" + range_key + "'");
}

inline std::string indexed_name(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.%s", stem, i, ext);
  return buf;
}

}  // namespace detail

inline std::string synth_kind_name(SynthKind k) {
  switch (k) {
    case SynthKind::trace: return "trace";
    case SynthKind::sweep: return "sweep";
    case SynthKind::rocking: return "rocking";
    case SynthKind::rt: return "rt";
  }
  return "trace";
}

/// Writes generated files plus oracle.json into cfg.output_dir and returns
/// the oracle document.
inline json synth(const SynthConfig& cfg) {
  const std::string text = io::read_file(cfg.params);
  const json params = io::parse_json(text, cfg.params);
  NoiseSpec noise = params.contains("noise") ? io::noise_from_json(params.at("noise")) : NoiseSpec{};
  if (cfg.seed) noise.seed = *cfg.seed;
  const fs::path out = cfg.output_dir;
  json files = json::array();
  json oracle;
  json seeds = json::array({noise.seed});

  switch (cfg.kind) {
    case SynthKind::trace: {
      const auto p = io::notch_params_from_json(params.at("params"));
      const auto n_points = params.value("n_points", std::size_t{1001});
      const double span = params.contains("span_hz")
                              ? io::detail::get_num(params, "span_hz")
                              : io::detail::get_num_or(params, "span_linewidths", 20.0) * p.f_r / p.q_l;
      const auto trace = gen_trace(p, n_points, span, noise);
      io::write_file(out / "trace.csv", io::format_trace_csv(trace));
      files.push_back("trace.csv");
      oracle = {{"params", io::to_json(p)},
                {"q_i", internal_q(p.q_l, p.q_c_mag, p.phi)},
                {"n_points", n_points},
                {"span_hz", span}};
      break;
    }
    case SynthKind::sweep: {
      const auto tls = io::tls_params_from_json(params.at("tls"));
      const auto design = io::design_from_json(params.at("design"));
      const auto powers = detail::grid_from_json(params, "powers_dbm", "powers");
      AttenuationChain chain;
      if (params.contains("attenuators")) chain.attenuators_db = params.at("attenuators").get<std::vector<double>>();
      SweepOptions opt;
      opt.n_points = params.value("n_points", opt.n_points);
      opt.span_linewidths = io::detail::get_num_or(params, "span_linewidths", opt.span_linewidths);
      const auto sweep = gen_power_sweep(tls, design, powers, chain, noise, opt);
      io::SweepManifest manifest;
      manifest.resonator_id = params.value("resonator_id", std::string("synthetic"));
      manifest.attenuators = chain.attenuators_db;
      if (params.contains("temperature_k")) manifest.temperature_k = io::detail::get_num(params, "temperature_k");
      json points = json::array();
      seeds = json::array();
      for (std::size_t i = 0; i < sweep.traces.size(); ++i) {
        const auto name = detail::indexed_name("trace", i, "csv");
        io::write_file(out / name, io::format_trace_csv(sweep.traces[i]));
        files.push_back(name);
        manifest.traces.push_back({name, powers[i]});
        points.push_back(io::to_json(sweep.oracle[i]));
        seeds.push_back(sweep.oracle[i].seed);
      }
      io::write_file(out / "manifest.json", io::dump(io::to_json(manifest)));
      files.push_back("manifest.json");
      oracle = {{"tls", io::to_json(tls)}, {"design", io::to_json(design)}, {"points", points}};
      break;
    }
    case SynthKind::rocking: {
      const auto p = io::pseudo_voigt_from_json(params.at("peak"));
      const std::string mode = params.value("mode", std::string("rocking"));
      if (mode != "rocking" && mode != "theta2theta") {
        throw Error(Errc::parse, "mode must be 'rocking' or 'theta2theta'");
      }
      const double lo = io::detail::get_num_or(params, "angle_min", p.center - 5.0 * p.fwhm);
      const double hi = io::detail::get_num_or(params, "angle_max", p.center + 5.0 * p.fwhm);
      const auto n_points = params.value("n_points", std::size_t{401});
      const auto scan = gen_rocking(p, lo, hi, n_points, noise,
                                    mode == "rocking" ? ScanMode::rocking : ScanMode::theta_2theta);
      io::write_file(out / "scan.csv", io::format_scan_csv(scan));
      files.push_back("scan.csv");
      oracle = {{"peak", io::to_json(p)}, {"mode", mode}, {"angle_min", lo}, {"angle_max", hi}, {"n_points", n_points}};
      break;
    }
    case SynthKind::rt: {
      std::vector<ResistanceStep> steps;
      json steps_json = json::array();
      for (const auto& s : params.value("steps", json::array())) {
        steps.push_back({io::detail::get_num(s, "t_c"), io::detail::get_num(s, "level")});
        steps_json.push_back({{"t_c", steps.back().t_c}, {"level", steps.back().level}});
      }
      const double normal = io::detail::get_num(params, "normal_resistance");
      const double floor = io::detail::get_num_or(params, "noise_floor", 0.0);
      const auto temps = detail::grid_from_json(params, "temperatures_k", "temperatures");
      const auto trace = gen_rt(steps, normal, floor, temps, noise);
      io::write_file(out / "rt.csv", io::format_rt_csv(trace));
      files.push_back("rt.csv");
      oracle = {{"steps", steps_json}, {"normal_resistance", normal}, {"noise_floor", floor}};
      break;
    }
  }
  oracle["kind"] = synth_kind_name(cfg.kind);
  oracle["noise"] = io::to_json(noise);
  oracle["files"] = files;
  const json config = {{"command", "synth"},
                       {"kind", synth_kind_name(cfg.kind)},
                       {"params", cfg.params},
                       {"output", cfg.output_dir},
                       {"seed", cfg.seed ? json(*cfg.seed) : json(nullptr)}};
  oracle["provenance"] = provenance(config, {{cfg.params, io::sha256_hex(text)}}, seeds);
  io::write_file(out / "oracle.json", io::dump(oracle));
  return oracle;
}

}  // namespace resq::pipeline
