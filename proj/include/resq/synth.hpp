#pragma once

// Deterministic synthetic data for every analysis module. All generators
// are pure functions of (inputs, seed): the engine is std::mt19937_64,
// whose output sequence is fixed by the standard, and the uniform/normal
// transforms below are written out explicitly because the standard
// distributions are implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "resq/core_model.hpp"
#include "resq/tls_analysis.hpp"
#include "resq/transport_analysis.hpp"
#include "resq/xrd_analysis.hpp"

namespace resq {

enum class NoiseKind { none, complex_gaussian, multiplicative, poisson_like };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// splitmix64 finalizer; derives independent per-task seeds as
/// split_seed(seed, task_index).
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(constants::two_pi * u2);
    has_spare_ = true;
    return r * std::cos(constants::two_pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Uniform grid of n_points centered on f_r. Complex-Gaussian noise adds
/// N(0, (sigma a)^2) to the real and imaginary parts independently.
inline ComplexTransmissionTrace gen_trace(const NotchModelParams& params, std::size_t n_points,
                                          double span, const NoiseSpec& noise = {}) {
  if (n_points < kMinTracePoints) {
    throw Error(Errc::precondition, "gen_trace needs at least 16 points");
  }
  if (!(span > 0.0)) {
    throw Error(Errc::precondition, "gen_trace needs span > 0");
  }
  ComplexTransmissionTrace t;
  t.frequencies.resize(n_points);
  t.s21.resize(n_points);
  const double f0 = params.f_r - 0.5 * span;
  const double step = span / static_cast<double>(n_points - 1);
  Rng rng(noise.seed);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double f = f0 + step * static_cast<double>(i);
    t.frequencies[i] = f;
    cplx s = s21_notch(params, f);
    switch (noise.kind) {
      case NoiseKind::none:
        break;
      case NoiseKind::complex_gaussian: {
        const double re = rng.normal();
        const double im = rng.normal();
        s += noise.sigma * params.a * cplx(re, im);
        break;
      }
      case NoiseKind::multiplicative:
        s *= 1.0 + noise.sigma * rng.normal();
        break;
      case NoiseKind::poisson_like:
        s += noise.sigma * std::sqrt(std::abs(s)) * rng.normal();
        break;
    }
    t.s21[i] = s;
  }
  return t;
}

/// Everything about a resonator that does not depend on drive power.
struct ResonatorDesign {
  double f_r = 6e9;
  double q_c_mag = 1e5;
  double phi = 0.0;
  double a = 1.0;
  double alpha = 0.0;
  double tau = 0.0;
};

struct SweepOracle {
  double vna_power_dbm = 0.0;
  double p_in = 0.0;  // W
  double n = 0.0;
  double q_i = 0.0;
  double q_l = 0.0;
  int iterations = 0;
  double final_rel_step = 0.0;
  std::uint64_t seed = 0;
};

struct PowerSweep {
  std::vector<ComplexTransmissionTrace> traces;
  std::vector<SweepOracle> oracle;
};

struct SweepOptions {
  std::size_t n_points = 1001;
  double span_linewidths = 20.0;  // total span in units of f_r / q_l
  double damping = 0.5;
  int max_iterations = 1000;
  double tolerance = 1e-9;
  CouplingQConvention coupling = CouplingQConvention::magnitude;
};

/// Solves the self-consistent pair (n, Q_i) at one input power by damped
/// fixed-point iteration n <- (1 - l) n + l photon_number(P, f_r, Q_l(Q_i(n)), Q_c).
inline SweepOracle solve_operating_point(const TLSParams& tls, const ResonatorDesign& design,
                                         double p_in, const SweepOptions& opt = {}) {
  const double qc = coupling_q(design.q_c_mag, design.phi, opt.coupling);
  auto n_of = [&](double q_i) {
    return photon_number(p_in, design.f_r, loaded_q(q_i, design.q_c_mag, design.phi), qc);
  };
  SweepOracle o;
  o.p_in = p_in;
  double n = n_of(1.0 / (tls.f_delta_tls + tls.delta0));
  for (o.iterations = 1; o.iterations <= opt.max_iterations; ++o.iterations) {
    const double target = n_of(1.0 / tls_delta(n, tls));
    const double next = (1.0 - opt.damping) * n + opt.damping * target;
    o.final_rel_step = n > 0.0 ? std::abs(next - n) / n : std::abs(next - n);
    n = next;
    if (o.final_rel_step < opt.tolerance) break;
  }
  if (!(o.final_rel_step < opt.tolerance)) {
    throw Error(Errc::no_fixed_point, "photon-number fixed point did not converge");
  }
  o.n = n;
  o.q_i = 1.0 / tls_delta(n, tls);
  o.q_l = loaded_q(o.q_i, design.q_c_mag, design.phi);
  return o;
}

/// One trace per VNA power; trace i uses noise seed split_seed(noise.seed, i).
inline PowerSweep gen_power_sweep(const TLSParams& tls, const ResonatorDesign& design,
                                  std::span<const double> powers_dbm,
                                  const AttenuationChain& chain, const NoiseSpec& noise = {},
                                  const SweepOptions& opt = {}) {
  if (!(tls.f_delta_tls >= 0.0) || !(tls.delta0 >= 0.0) || !(tls.n_c > 0.0) ||
      !(tls.beta > 0.0) || !(tls.f_delta_tls + tls.delta0 > 0.0)) {
    throw Error(Errc::precondition, "invalid TLS parameters");
  }
  PowerSweep sweep;
  for (std::size_t i = 0; i < powers_dbm.size(); ++i) {
    SweepOracle o = solve_operating_point(tls, design, input_power(powers_dbm[i], chain), opt);
    o.vna_power_dbm = powers_dbm[i];
    o.seed = split_seed(noise.seed, i);

    NotchModelParams p;
    p.f_r = design.f_r;
    p.q_l = o.q_l;
    p.q_c_mag = design.q_c_mag;
    p.phi = design.phi;
    p.a = design.a;
    p.alpha = design.alpha;
    p.tau = design.tau;
    NoiseSpec ns = noise;
    ns.seed = o.seed;
    auto trace = gen_trace(p, opt.n_points, opt.span_linewidths * p.f_r / p.q_l, ns);
    trace.vna_power_dbm = powers_dbm[i];
    trace.total_attenuation_db = chain.total_db();
    sweep.traces.push_back(std::move(trace));
    sweep.oracle.push_back(o);
  }
  return sweep;
}

/// Samples pseudo_voigt on a uniform grid over [lo, hi]. Poisson-like noise
/// adds sigma sqrt(I) N(0, 1); multiplicative multiplies by 1 + sigma N(0, 1).
/// Intensities are clipped at 0.
inline DiffractionScan gen_rocking(const PseudoVoigtParams& p, double lo, double hi,
                                   std::size_t n_points, const NoiseSpec& noise = {},
                                   ScanMode mode = ScanMode::rocking) {
  if (n_points < kMinWindowSamples) {
    throw Error(Errc::precondition, "gen_rocking needs at least 10 points");
  }
  if (!(hi > lo)) {
    throw Error(Errc::precondition, "gen_rocking needs hi > lo");
  }
  DiffractionScan scan;
  scan.mode = mode;
  scan.angles.resize(n_points);
  scan.intensities.resize(n_points);
  Rng rng(noise.seed);
  const double step = (hi - lo) / static_cast<double>(n_points - 1);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double x = lo + step * static_cast<double>(i);
    double v = pseudo_voigt(x, p);
    switch (noise.kind) {
      case NoiseKind::none:
        break;
      case NoiseKind::poisson_like:
        v += noise.sigma * std::sqrt(std::max(v, 0.0)) * rng.normal();
        break;
      case NoiseKind::multiplicative:
        v *= 1.0 + noise.sigma * rng.normal();
        break;
      case NoiseKind::complex_gaussian:
        v += noise.sigma * rng.normal();
        break;
    }
    scan.angles[i] = x;
    scan.intensities[i] = std::max(v, 0.0);
  }
  return scan;
}

struct ResistanceStep {
  double t_c = 0.0;    // K
  double level = 0.0;  // ohm, resistance just below t_c
};

/// Piecewise-constant R(T): normal_resistance above the first t_c, each
/// step's level below its t_c, never below the noise floor.
inline ResistanceTrace gen_rt(std::span<const ResistanceStep> steps, double normal_resistance,
                              double noise_floor, std::span<const double> temperatures,
                              const NoiseSpec& noise = {}) {
  double prev_t = std::numeric_limits<double>::infinity();
  double prev_level = normal_resistance;
  for (const auto& s : steps) {
    if (!(s.t_c < prev_t) || !(s.level < prev_level) || !(s.level >= 0.0)) {
      throw Error(Errc::malformed_steps,
                  "steps must have strictly decreasing t_c and strictly decreasing levels "
                  "below the normal resistance");
    }
    prev_t = s.t_c;
    prev_level = s.level;
  }
  ResistanceTrace trace;
  trace.temperatures.assign(temperatures.begin(), temperatures.end());
  trace.resistances.resize(temperatures.size());
  Rng rng(noise.seed);
  for (std::size_t i = 0; i < temperatures.size(); ++i) {
    const double t = temperatures[i];
    double r = normal_resistance;
    for (const auto& s : steps) {
      if (t <= s.t_c) r = s.level;
    }
    r = std::max(r, noise_floor);
    if (noise.kind == NoiseKind::multiplicative) {
      r *= 1.0 + noise.sigma * rng.normal();
    } else if (noise.kind == NoiseKind::complex_gaussian || noise.kind == NoiseKind::poisson_like) {
      r += noise.sigma * rng.normal();
    }
    trace.resistances[i] = r;
  }
  return trace;
}

/// Uniform temperature grid [lo, hi] with n points.
inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = n > 1 ? lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1) : lo;
  }
  return g;
}

}  // namespace resq
