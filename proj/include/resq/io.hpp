#pragma once

// Text file formats (CSV traces, Touchstone, XRD scans, R(T) traces) and
// JSON serialization of the domain types.
//
// CSV headers:
//   frequency_hz,s21_real,s21_imag      (or frequency_hz,s21_db,s21_phase_rad)
//   angle_deg,intensity
//   temperature_k,resistance_ohm
// Lines starting with '#' and blank lines are ignored. Numbers use '.' as
// the decimal separator regardless of locale.

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "resq/core_model.hpp"
#include "resq/synth.hpp"
#include "resq/tls_analysis.hpp"
#include "resq/transport_analysis.hpp"
#include "resq/xrd_analysis.hpp"

namespace resq::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files and digests

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io, "cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw Error(Errc::io, "failed writing '" + path.string() + "'");
  }
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::io, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string location(std::string_view source, std::size_t line, std::size_t column) {
  return std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(column);
}

struct CsvTable {
  std::string header;
  std::size_t header_line = 0;
  std::vector<std::vector<double>> rows;
};

/// Parses a numeric CSV with a single header line and a fixed column count.
inline CsvTable parse_csv(std::string_view text, std::string_view source, std::size_t columns) {
  CsvTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    ++line_no;
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    if (!have_header) {
      table.header = std::string(body);
      table.header_line = line_no;
      have_header = true;
      continue;
    }
    std::vector<double> row;
    std::size_t field_start = 0;
    while (true) {
      const std::size_t comma = line.find(',', field_start);
      const std::string_view raw = line.substr(
          field_start, comma == std::string_view::npos ? std::string_view::npos : comma - field_start);
      const std::string_view field = trim(raw);
      const std::size_t lead = raw.find_first_not_of(" \t");
      const std::size_t column = field_start + 1 + (lead == std::string_view::npos ? 0 : lead);
      if (row.size() == columns) {
        throw Error(Errc::parse, location(source, line_no, field_start + 1) +
                                     ": expected " + std::to_string(columns) + " fields");
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw Error(Errc::parse, location(source, line_no, column) + ": invalid number '" +
                                     std::string(field) + "'");
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      field_start = comma + 1;
    }
    if (row.size() != columns) {
      throw Error(Errc::parse, location(source, line_no, line.size() + 1) + ": expected " +
                                   std::to_string(columns) + " fields, found " +
                                   std::to_string(row.size()));
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) {
    throw Error(Errc::parse, location(source, 1, 1) + ": empty file, missing header line");
  }
  return table;
}

inline void expect_header(const CsvTable& t, std::string_view source,
                          std::initializer_list<std::string_view> allowed) {
  for (auto h : allowed) {
    if (t.header == h) return;
  }
  std::string msg = location(source, t.header_line, 1) + ": unrecognised header '" + t.header +
                    "', expected ";
  bool first = true;
  for (auto h : allowed) {
    msg += (first ? "'" : " or '") + std::string(h) + "'";
    first = false;
  }
  throw Error(Errc::parse, msg);
}

}  // namespace detail

inline constexpr std::string_view kTraceHeaderRI = "frequency_hz,s21_real,s21_imag";
inline constexpr std::string_view kTraceHeaderDbPhase = "frequency_hz,s21_db,s21_phase_rad";
inline constexpr std::string_view kScanHeader = "angle_deg,intensity";
inline constexpr std::string_view kRtHeader = "temperature_k,resistance_ohm";

inline ComplexTransmissionTrace parse_trace_csv(std::string_view text, std::string_view source) {
  const auto table = detail::parse_csv(text, source, 3);
  detail::expect_header(table, source, {kTraceHeaderRI, kTraceHeaderDbPhase});
  const bool db_phase = table.header == kTraceHeaderDbPhase;
  ComplexTransmissionTrace t;
  for (const auto& row : table.rows) {
    t.frequencies.push_back(row[0]);
    t.s21.push_back(db_phase ? std::polar(std::pow(10.0, row[1] / 20.0), row[2])
                             : cplx(row[1], row[2]));
  }
  return t;
}

inline std::string format_trace_csv(const ComplexTransmissionTrace& t) {
  std::string out(kTraceHeaderRI);
  out += '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += format_double(t.frequencies[i]) + ',' + format_double(t.s21[i].real()) + ',' +
           format_double(t.s21[i].imag()) + '\n';
  }
  return out;
}

/// Two-port Touchstone (v1, and v2 network data), returning the S21 path.
inline ComplexTransmissionTrace parse_touchstone(std::string_view text, std::string_view source) {
  double f_mult = 1e9;
  std::string fmt = "MA";
  bool order_12_21 = false;
  bool seen_option = false;
  std::vector<double> values;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    ++line_no;
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    if (const auto bang = line.find('!'); bang != std::string_view::npos) line = line.substr(0, bang);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::string upper(line);
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper.front() == '[') {
      if (upper.rfind("[TWO-PORT DATA ORDER]", 0) == 0) {
        order_12_21 = upper.find("12_21") != std::string::npos;
      } else if (upper.rfind("[NUMBER OF PORTS]", 0) == 0) {
        if (upper.find('2') == std::string::npos) {
          throw Error(Errc::parse, detail::location(source, line_no, 1) +
                                       ": only two-port Touchstone data is supported");
        }
      }
      continue;
    }
    if (upper.front() == '#') {
      if (seen_option) continue;
      seen_option = true;
      std::istringstream ss(upper.substr(1));
      std::string tok;
      while (ss >> tok) {
        if (tok == "HZ") f_mult = 1.0;
        else if (tok == "KHZ") f_mult = 1e3;
        else if (tok == "MHZ") f_mult = 1e6;
        else if (tok == "GHZ") f_mult = 1e9;
        else if (tok == "RI" || tok == "MA" || tok == "DB") fmt = tok;
        else if (tok == "S") continue;
        else if (tok == "R") ss >> tok;
        else {
          throw Error(Errc::parse, detail::location(source, line_no, 1) +
                                       ": unsupported option '" + tok + "'");
        }
      }
      continue;
    }
    std::size_t start = 0;
    while (start < line.size()) {
      const std::size_t ws = line.find_first_not_of(" \t", start);
      if (ws == std::string_view::npos) break;
      const std::size_t we = line.find_first_of(" \t", ws);
      const std::string_view tok = line.substr(ws, we == std::string_view::npos ? line.size() - ws : we - ws);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw Error(Errc::parse, detail::location(source, line_no, ws + 1) + ": invalid number '" +
                                     std::string(tok) + "'");
      }
      values.push_back(v);
      start = we == std::string_view::npos ? line.size() : we;
    }
  }
  if (values.empty()) {
    throw Error(Errc::parse, detail::location(source, 1, 1) + ": no network data");
  }
  if (values.size() % 9 != 0) {
    throw Error(Errc::parse, detail::location(source, line_no, 1) +
                                 ": two-port records need 9 values each, found " +
                                 std::to_string(values.size()) + " values");
  }
  ComplexTransmissionTrace t;
  // Record layout: f, S11, S21, S12, S22 (S12 before S21 under the 12_21 order).
  const std::size_t pair = order_12_21 ? 2 : 1;
  for (std::size_t r = 0; r < values.size() / 9; ++r) {
    const double* rec = &values[9 * r];
    const double x = rec[1 + 2 * pair];
    const double y = rec[2 + 2 * pair];
    cplx s;
    if (fmt == "RI") s = cplx(x, y);
    else if (fmt == "MA") s = std::polar(x, y * constants::pi / 180.0);
    else s = std::polar(std::pow(10.0, x / 20.0), y * constants::pi / 180.0);
    t.frequencies.push_back(rec[0] * f_mult);
    t.s21.push_back(s);
  }
  return t;
}

enum class TraceFormat { csv, touchstone };

inline ComplexTransmissionTrace read_trace(const std::filesystem::path& path,
                                           TraceFormat format = TraceFormat::csv) {
  const std::string text = read_file(path);
  return format == TraceFormat::csv ? parse_trace_csv(text, path.string())
                                    : parse_touchstone(text, path.string());
}

inline DiffractionScan parse_scan_csv(std::string_view text, std::string_view source) {
  const auto table = detail::parse_csv(text, source, 2);
  detail::expect_header(table, source, {kScanHeader});
  DiffractionScan s;
  for (const auto& row : table.rows) {
    s.angles.push_back(row[0]);
    s.intensities.push_back(row[1]);
  }
  return s;
}

inline std::string format_scan_csv(const DiffractionScan& s) {
  std::string out(kScanHeader);
  out += '\n';
  for (std::size_t i = 0; i < s.angles.size(); ++i) {
    out += format_double(s.angles[i]) + ',' + format_double(s.intensities[i]) + '\n';
  }
  return out;
}

inline ResistanceTrace parse_rt_csv(std::string_view text, std::string_view source) {
  const auto table = detail::parse_csv(text, source, 2);
  detail::expect_header(table, source, {kRtHeader});
  ResistanceTrace t;
  for (const auto& row : table.rows) {
    t.temperatures.push_back(row[0]);
    t.resistances.push_back(row[1]);
  }
  return t;
}

inline std::string format_rt_csv(const ResistanceTrace& t) {
  std::string out(kRtHeader);
  out += '\n';
  for (std::size_t i = 0; i < t.temperatures.size(); ++i) {
    out += format_double(t.temperatures[i]) + ',' + format_double(t.resistances[i]) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

/// Non-finite values serialise as null and read back as +inf.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double get_num(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw Error(Errc::parse, std::string("missing field '") + key + "'");
  }
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) {
    throw Error(Errc::parse, std::string("field '") + key + "' must be a number");
  }
  return v.get<double>();
}

inline double get_num_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? get_num(j, key) : fallback;
}

}  // namespace detail

inline json to_json(const NotchModelParams& p) {
  return {{"f_r", p.f_r}, {"q_l", p.q_l}, {"q_c_mag", p.q_c_mag}, {"phi", p.phi},
          {"a", p.a},     {"alpha", p.alpha}, {"tau", p.tau}};
}

inline NotchModelParams notch_params_from_json(const json& j) {
  NotchModelParams p;
  p.f_r = detail::get_num(j, "f_r");
  p.q_c_mag = detail::get_num(j, "q_c_mag");
  p.phi = detail::get_num_or(j, "phi", 0.0);
  if (j.contains("q_l")) {
    p.q_l = detail::get_num(j, "q_l");
  } else if (j.contains("q_i")) {
    p.q_l = loaded_q(detail::get_num(j, "q_i"), p.q_c_mag, p.phi);
  } else {
    throw Error(Errc::parse, "notch parameters need 'q_l' or 'q_i'");
  }
  p.a = detail::get_num_or(j, "a", 1.0);
  p.alpha = detail::get_num_or(j, "alpha", 0.0);
  p.tau = detail::get_num_or(j, "tau", 0.0);
  if (!p.is_physical()) {
    throw Error(Errc::unphysical_parameters, "notch parameters are not physical");
  }
  return p;
}

inline json to_json(const NotchStdErrors& e) {
  using detail::num;
  return {{"f_r", num(e.f_r)}, {"q_l", num(e.q_l)}, {"q_c_mag", num(e.q_c_mag)},
          {"phi", num(e.phi)}, {"a", num(e.a)},     {"alpha", num(e.alpha)},
          {"tau", num(e.tau)}};
}

inline json to_json(const ResonatorFitResult& r) {
  return {{"params", to_json(r.params)},
          {"q_i", r.q_i},
          {"std_errors", to_json(r.std_errors)},
          {"q_i_rel_error", detail::num(r.q_i_rel_error)},
          {"residual_rms", r.residual_rms}};
}

inline json to_json(const EnsembleCurve& c) {
  json bins = json::array();
  for (const auto& b : c.bins) {
    bins.push_back({{"n_center", b.n_center},
                    {"mean_q_i", b.mean_q_i},
                    {"std_q_i", b.std_q_i},
                    {"count", b.count}});
  }
  return {{"bins", bins}};
}

/// Accepts either a curve object or a report holding one under "curve".
inline EnsembleCurve curve_from_json(const json& j) {
  const json& c = j.contains("curve") ? j.at("curve") : j;
  if (!c.is_object() || !c.contains("bins") || !c.at("bins").is_array()) {
    throw Error(Errc::parse, "curve needs a 'bins' array");
  }
  EnsembleCurve curve;
  for (const auto& b : c.at("bins")) {
    EnsembleBin bin;
    bin.n_center = detail::get_num(b, "n_center");
    bin.mean_q_i = detail::get_num(b, "mean_q_i");
    bin.std_q_i = detail::get_num_or(b, "std_q_i", 0.0);
    bin.count = b.contains("count") ? b.at("count").get<std::size_t>() : 1;
    if (!(bin.n_center > 0.0) || !(bin.mean_q_i > 0.0) || !(bin.std_q_i >= 0.0) || bin.count < 1) {
      throw Error(Errc::parse, "curve bins need n_center > 0, mean_q_i > 0, std_q_i >= 0, count >= 1");
    }
    if (!curve.bins.empty() && !(bin.n_center > curve.bins.back().n_center)) {
      throw Error(Errc::parse, "curve bins must have strictly increasing n_center");
    }
    curve.bins.push_back(bin);
  }
  return curve;
}

inline json to_json(const TLSParams& p) {
  using detail::num;
  return {{"f_delta_tls", p.f_delta_tls},
          {"delta0", p.delta0},
          {"n_c", p.n_c},
          {"beta", p.beta},
          {"std_errors",
           {{"f_delta_tls", num(p.std_errors.f_delta_tls)},
            {"delta0", num(p.std_errors.delta0)},
            {"n_c", num(p.std_errors.n_c)},
            {"beta", num(p.std_errors.beta)}}}};
}

inline TLSParams tls_params_from_json(const json& j) {
  TLSParams p;
  p.f_delta_tls = detail::get_num(j, "f_delta_tls");
  p.delta0 = detail::get_num(j, "delta0");
  p.n_c = detail::get_num(j, "n_c");
  p.beta = detail::get_num(j, "beta");
  if (!(p.f_delta_tls >= 0.0) || !(p.delta0 >= 0.0) || !(p.n_c > 0.0) || !(p.beta > 0.0) ||
      !(p.beta <= 2.0)) {
    throw Error(Errc::parse, "TLS parameters out of bounds");
  }
  if (j.contains("std_errors") && j.at("std_errors").is_object()) {
    const auto& e = j.at("std_errors");
    p.std_errors = {detail::get_num_or(e, "f_delta_tls", 0.0), detail::get_num_or(e, "delta0", 0.0),
                    detail::get_num_or(e, "n_c", 0.0), detail::get_num_or(e, "beta", 0.0)};
  }
  return p;
}

inline json to_json(const PseudoVoigtParams& p) {
  using detail::num;
  return {{"center", p.center},
          {"fwhm", p.fwhm},
          {"eta", p.eta},
          {"amplitude", p.amplitude},
          {"background", p.background},
          {"std_errors",
           {{"center", num(p.std_errors.center)},
            {"fwhm", num(p.std_errors.fwhm)},
            {"eta", num(p.std_errors.eta)},
            {"amplitude", num(p.std_errors.amplitude)},
            {"background", num(p.std_errors.background)}}}};
}

inline PseudoVoigtParams pseudo_voigt_from_json(const json& j) {
  PseudoVoigtParams p;
  p.center = detail::get_num(j, "center");
  p.fwhm = detail::get_num(j, "fwhm");
  p.eta = detail::get_num_or(j, "eta", 0.5);
  p.amplitude = detail::get_num_or(j, "amplitude", 1.0);
  p.background = detail::get_num_or(j, "background", 0.0);
  if (!(p.fwhm > 0.0) || !(p.eta >= 0.0 && p.eta <= 1.0) || !(p.amplitude > 0.0) ||
      !(p.background >= 0.0)) {
    throw Error(Errc::parse, "Pseudo-Voigt parameters out of bounds");
  }
  return p;
}

inline json to_json(const TransitionReport& r) {
  json tr = json::array();
  for (const auto& t : r.transitions) tr.push_back({{"t_c", t.t_c}, {"drop_decades", t.drop_decades}});
  return {{"transitions", tr},
          {"normal_resistance", r.normal_resistance},
          {"noise_floor", r.noise_floor}};
}

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::complex_gaussian: return "complex-gaussian";
    case NoiseKind::multiplicative: return "multiplicative";
    case NoiseKind::poisson_like: return "poisson-like";
  }
  return "none";
}

inline json to_json(const NoiseSpec& n) {
  return {{"kind", to_string(n.kind)}, {"sigma", n.sigma}, {"seed", n.seed}};
}

inline NoiseSpec noise_from_json(const json& j) {
  NoiseSpec n;
  const std::string kind = j.value("kind", std::string("none"));
  if (kind == "none") n.kind = NoiseKind::none;
  else if (kind == "complex-gaussian") n.kind = NoiseKind::complex_gaussian;
  else if (kind == "multiplicative") n.kind = NoiseKind::multiplicative;
  else if (kind == "poisson-like") n.kind = NoiseKind::poisson_like;
  else throw Error(Errc::parse, "unknown noise kind '" + kind + "'");
  n.sigma = detail::get_num_or(j, "sigma", 0.0);
  if (!(n.sigma >= 0.0)) throw Error(Errc::parse, "noise sigma must be >= 0");
  n.seed = j.value("seed", std::uint64_t{0});
  return n;
}

inline json to_json(const SweepOracle& o) {
  return {{"vna_power_dbm", o.vna_power_dbm}, {"p_in", o.p_in},
          {"n", o.n},                         {"q_i", o.q_i},
          {"q_l", o.q_l},                     {"iterations", o.iterations},
          {"final_rel_step", o.final_rel_step}, {"seed", o.seed}};
}

inline json to_json(const ResonatorDesign& d) {
  return {{"f_r", d.f_r}, {"q_c_mag", d.q_c_mag}, {"phi", d.phi},
          {"a", d.a},     {"alpha", d.alpha},     {"tau", d.tau}};
}

inline ResonatorDesign design_from_json(const json& j) {
  ResonatorDesign d;
  d.f_r = detail::get_num(j, "f_r");
  d.q_c_mag = detail::get_num(j, "q_c_mag");
  d.phi = detail::get_num_or(j, "phi", 0.0);
  d.a = detail::get_num_or(j, "a", 1.0);
  d.alpha = detail::get_num_or(j, "alpha", 0.0);
  d.tau = detail::get_num_or(j, "tau", 0.0);
  if (!(d.f_r > 0.0) || !(d.q_c_mag > 0.0) || !(d.a > 0.0) || !(std::abs(d.phi) < constants::pi / 2)) {
    throw Error(Errc::parse, "resonator design out of bounds");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Sweep manifest

struct ManifestEntry {
  std::string path;
  double vna_power_dbm = 0.0;
};

struct SweepManifest {
  std::vector<ManifestEntry> traces;
  std::vector<double> attenuators;
  std::optional<double> temperature_k;
  std::string resonator_id;
  TraceFormat format = TraceFormat::csv;
};

inline SweepManifest manifest_from_json(const json& j) {
  SweepManifest m;
  if (!j.is_object() || !j.contains("traces") || !j.at("traces").is_array()) {
    throw Error(Errc::parse, "manifest needs a 'traces' array");
  }
  std::set<std::string> seen;
  for (const auto& t : j.at("traces")) {
    if (!t.contains("path") || !t.at("path").is_string()) {
      throw Error(Errc::parse, "manifest trace entries need a string 'path'");
    }
    ManifestEntry e{t.at("path").get<std::string>(), detail::get_num(t, "vna_power_dbm")};
    if (!seen.insert(e.path).second) {
      throw Error(Errc::parse, "manifest lists '" + e.path + "' more than once");
    }
    m.traces.push_back(std::move(e));
  }
  if (m.traces.empty()) throw Error(Errc::parse, "manifest needs at least one trace");
  if (j.contains("attenuators")) {
    for (const auto& a : j.at("attenuators")) {
      if (!a.is_number() || !(a.get<double>() >= 0.0)) {
        throw Error(Errc::parse, "attenuators must be numbers >= 0");
      }
      m.attenuators.push_back(a.get<double>());
    }
  }
  if (j.contains("temperature_k") && !j.at("temperature_k").is_null()) {
    m.temperature_k = detail::get_num(j, "temperature_k");
  }
  m.resonator_id = j.value("resonator_id", std::string());
  const std::string fmt = j.value("format", std::string("csv"));
  if (fmt == "csv") m.format = TraceFormat::csv;
  else if (fmt == "touchstone") m.format = TraceFormat::touchstone;
  else throw Error(Errc::parse, "unknown trace format '" + fmt + "'");
  return m;
}

inline json to_json(const SweepManifest& m) {
  json traces = json::array();
  for (const auto& t : m.traces) traces.push_back({{"path", t.path}, {"vna_power_dbm", t.vna_power_dbm}});
  json j = {{"resonator_id", m.resonator_id},
            {"format", m.format == TraceFormat::csv ? "csv" : "touchstone"},
            {"attenuators", m.attenuators},
            {"temperature_k", m.temperature_k ? json(*m.temperature_k) : json(nullptr)},
            {"traces", traces}};
  return j;
}

inline json parse_json(std::string_view text, std::string_view source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse, std::string(source) + ": " + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) {
  return parse_json(read_file(path), path.string());
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace resq::io
