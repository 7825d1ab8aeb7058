#pragma once

// Notch-configuration resonator model, Q-factor algebra and photon-number
// estimation shared by all analysis modules.

#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "resq/constants.hpp"
#include "resq/errors.hpp"

namespace resq {

using cplx = std::complex<double>;

inline constexpr std::size_t kMinTracePoints = 16;

/// A frequency sweep of complex S21 plus the power metadata needed to
/// convert it into a photon number.
struct ComplexTransmissionTrace {
  std::vector<double> frequencies;  // Hz
  std::vector<cplx> s21;            // linear
  double vna_power_dbm = 0.0;
  double total_attenuation_db = 0.0;
  std::optional<double> temperature_k;

  std::size_t size() const noexcept { return frequencies.size(); }
};

inline void validate(const ComplexTransmissionTrace& trace) {
  if (trace.frequencies.size() != trace.s21.size()) {
    throw Error(Errc::precondition,
                "trace has " + std::to_string(trace.frequencies.size()) +
                    " frequencies but " + std::to_string(trace.s21.size()) +
                    " s21 samples");
  }
  if (trace.size() < kMinTracePoints) {
    throw Error(Errc::precondition,
                "trace has " + std::to_string(trace.size()) +
                    " points; at least " + std::to_string(kMinTracePoints) +
                    " are required");
  }
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!std::isfinite(trace.frequencies[i]) ||
        !std::isfinite(trace.s21[i].real()) ||
        !std::isfinite(trace.s21[i].imag())) {
      throw Error(Errc::precondition,
                  "non-finite sample at index " + std::to_string(i));
    }
    if (i > 0 && !(trace.frequencies[i] > trace.frequencies[i - 1])) {
      throw Error(Errc::precondition,
                  "frequencies not strictly increasing at index " +
                      std::to_string(i));
    }
  }
  if (!(trace.total_attenuation_db >= 0.0)) {
    throw Error(Errc::precondition, "total attenuation must be >= 0 dB");
  }
}

/// Seven-parameter notch model:
///   S21(f) = a e^{i alpha} e^{-2 pi i f tau}
///            [1 - (q_l / q_c_mag) e^{i phi} / (1 + 2 i q_l (f / f_r - 1))]
struct NotchModelParams {
  double f_r = 0.0;      // Hz
  double q_l = 0.0;      // loaded Q
  double q_c_mag = 0.0;  // |Q_c|
  double phi = 0.0;      // rad, impedance-mismatch rotation
  double a = 1.0;        // baseline amplitude
  double alpha = 0.0;    // rad, baseline phase
  double tau = 0.0;      // s, electrical delay

  double inverse_internal_q() const {
    return 1.0 / q_l - std::cos(phi) / q_c_mag;
  }

  bool is_physical() const {
    return f_r > 0.0 && q_l > 0.0 && q_c_mag > 0.0 && a > 0.0 &&
           std::abs(phi) < constants::pi / 2 && inverse_internal_q() > 0.0;
  }
};

inline cplx s21_notch(const NotchModelParams& p, double f) {
  const cplx environment = p.a * std::polar(1.0, p.alpha - constants::two_pi * f * p.tau);
  const cplx resonance = (p.q_l / p.q_c_mag) * std::polar(1.0, p.phi) /
                         cplx(1.0, 2.0 * p.q_l * (f / p.f_r - 1.0));
  return environment * (1.0 - resonance);
}

/// Q_i = 1 / (1/Q_l - cos(phi)/|Q_c|).
inline double internal_q(double q_l, double q_c_mag, double phi) {
  if (!(q_l > 0.0) || !(q_c_mag > 0.0) || !(std::abs(phi) < constants::pi / 2)) {
    throw Error(Errc::unphysical_parameters,
                "internal_q requires q_l > 0, q_c_mag > 0, |phi| < pi/2");
  }
  const double inv = 1.0 / q_l - std::cos(phi) / q_c_mag;
  if (!(inv > 0.0)) {
    throw Error(Errc::unphysical_parameters,
                "1/q_l - cos(phi)/q_c_mag <= 0: internal Q is not finite and positive");
  }
  return 1.0 / inv;
}

/// Inverse of internal_q for fixed coupling: the loaded Q implied by Q_i.
inline double loaded_q(double q_i, double q_c_mag, double phi) {
  return 1.0 / (1.0 / q_i + std::cos(phi) / q_c_mag);
}

/// Which scalar stands in for Q_c in the photon-number formula.
enum class CouplingQConvention {
  magnitude,       // |Q_c|
  real_corrected,  // |Q_c| / cos(phi), i.e. 1 / Re(1/Q_c)
};

inline double coupling_q(double q_c_mag, double phi, CouplingQConvention conv) {
  return conv == CouplingQConvention::magnitude ? q_c_mag : q_c_mag / std::cos(phi);
}

struct AttenuationChain {
  std::vector<double> attenuators_db;

  double total_db() const {
    return std::accumulate(attenuators_db.begin(), attenuators_db.end(), 0.0);
  }
};

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

/// Power arriving at the device, ignoring cable loss (so an upper bound).
inline double input_power(double vna_power_dbm, const AttenuationChain& chain) {
  for (double db : chain.attenuators_db) {
    if (!(db >= 0.0)) {
      throw Error(Errc::precondition, "attenuator values must be >= 0 dB");
    }
  }
  return dbm_to_watts(vna_power_dbm - chain.total_db());
}

/// Mean photon number n = 2 Q_l^2 P_in / (hbar w_r^2 Q_c), w_r = 2 pi f_r.
inline double photon_number(double p_in, double f_r, double q_l, double q_c) {
  const double omega = constants::two_pi * f_r;
  return 2.0 / (constants::hbar * omega * omega) * (q_l * q_l / q_c) * p_in;
}

inline constexpr double kThermalWarningRatio = 10.0;

/// hbar w_r / (k_B T); the ground-state assumption wants this >> 1.
inline double thermal_validity(double f_r, double temperature_k) {
  return constants::hbar * constants::two_pi * f_r / (constants::k_b * temperature_k);
}

/// Per-parameter standard errors of a notch fit.
struct NotchStdErrors {
  double f_r = 0.0;
  double q_l = 0.0;
  double q_c_mag = 0.0;
  double phi = 0.0;
  double a = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
};

struct ResonatorFitResult {
  NotchModelParams params;
  double q_i = 0.0;
  NotchStdErrors std_errors;
  double q_i_rel_error = 0.0;
  double residual_rms = 0.0;
};

}  // namespace resq
