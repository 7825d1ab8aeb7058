#pragma once

// Pseudo-Voigt peak fitting for XRD theta-2theta scans and rocking curves,
// plus Ta phase identification by 2-theta peak position.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "resq/errors.hpp"
#include "resq/least_squares.hpp"

namespace resq {

enum class ScanMode { theta_2theta, rocking };

struct DiffractionScan {
  std::vector<double> angles;       // degrees, strictly increasing
  std::vector<double> intensities;  // counts, >= 0
  ScanMode mode = ScanMode::theta_2theta;
  std::optional<double> detector_angle_deg;  // fixed detector angle in rocking mode
};

inline void validate(const DiffractionScan& scan) {
  if (scan.angles.size() != scan.intensities.size()) {
    throw Error(Errc::precondition, "scan angles and intensities differ in length");
  }
  for (std::size_t i = 0; i < scan.angles.size(); ++i) {
    if (!std::isfinite(scan.angles[i]) || !std::isfinite(scan.intensities[i]) ||
        scan.intensities[i] < 0.0) {
      throw Error(Errc::precondition,
                  "scan sample " + std::to_string(i) + " is non-finite or negative");
    }
    if (i > 0 && !(scan.angles[i] > scan.angles[i - 1])) {
      throw Error(Errc::precondition,
                  "scan angles not strictly increasing at index " + std::to_string(i));
    }
  }
}

struct PseudoVoigtStdErrors {
  double center = 0.0;
  double fwhm = 0.0;
  double eta = 0.0;
  double amplitude = 0.0;
  double background = 0.0;
};

/// I(x) = amplitude [eta L(x) + (1 - eta) G(x)] + background, with L and G
/// of unit height sharing center and FWHM.
struct PseudoVoigtParams {
  double center = 0.0;
  double fwhm = 1.0;
  double eta = 0.5;
  double amplitude = 1.0;
  double background = 0.0;
  PseudoVoigtStdErrors std_errors;
};

inline double pseudo_voigt(double x, const PseudoVoigtParams& p) {
  const double u = (x - p.center) / p.fwhm;
  const double gauss = std::exp(-4.0 * std::numbers::ln2 * u * u);
  const double lorentz = 1.0 / (1.0 + 4.0 * u * u);
  return p.amplitude * (p.eta * lorentz + (1.0 - p.eta) * gauss) + p.background;
}

inline DiffractionScan normalize_scan(const DiffractionScan& scan) {
  const double peak = scan.intensities.empty()
                          ? 0.0
                          : *std::max_element(scan.intensities.begin(), scan.intensities.end());
  if (!(peak > 0.0)) {
    throw Error(Errc::precondition, "cannot normalize a scan whose maximum intensity is 0");
  }
  DiffractionScan out = scan;
  for (auto& v : out.intensities) v /= peak;
  return out;
}

struct AngleWindow {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct PeakFitOptions {
  bool poisson_weights = false;  // residuals weighted by 1 / sqrt(I + 1)
  int max_iterations = 1000;
  double x_tol = 1e-12;
};

struct PeakFit {
  PseudoVoigtParams params;
  bool non_identifiable = false;
  std::vector<std::string> warnings;
  int iterations = 0;
};

inline constexpr std::size_t kMinWindowSamples = 10;

/// Least-squares Pseudo-Voigt fit inside a window that must hold the
/// scan's intensity maximum.
inline PeakFit fit_peak(const DiffractionScan& scan, const AngleWindow& window = {},
                        const PeakFitOptions& options = {}) {
  validate(scan);
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < scan.angles.size(); ++i) {
    if (scan.angles[i] >= window.lo && scan.angles[i] <= window.hi) {
      x.push_back(scan.angles[i]);
      y.push_back(scan.intensities[i]);
    }
  }
  if (x.size() < kMinWindowSamples) {
    throw Error(Errc::window_too_narrow, "window holds " + std::to_string(x.size()) +
                                             " samples; at least " +
                                             std::to_string(kMinWindowSamples) + " are required");
  }
  const auto global_max = std::max_element(scan.intensities.begin(), scan.intensities.end());
  const double max_angle = scan.angles[static_cast<std::size_t>(global_max - scan.intensities.begin())];
  if (max_angle < window.lo || max_angle > window.hi) {
    throw Error(Errc::window_too_narrow, "window does not contain the intensity maximum");
  }

  const std::size_t n = x.size();
  const std::size_t imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double ymin = *std::min_element(y.begin(), y.end());
  const double ymax = y[imax];
  const double step = (x.back() - x.front()) / static_cast<double>(n - 1);

  // Half-height crossings around the maximum.
  const double half = 0.5 * (ymax + ymin);
  double left = x.front();
  for (std::size_t i = imax; i > 0; --i) {
    if (y[i - 1] < half) {
      left = x[i - 1] + (half - y[i - 1]) / (y[i] - y[i - 1]) * (x[i] - x[i - 1]);
      break;
    }
  }
  double right = x.back();
  for (std::size_t i = imax; i + 1 < n; ++i) {
    if (y[i + 1] < half) {
      right = x[i] + (y[i] - half) / (y[i] - y[i + 1]) * (x[i + 1] - x[i]);
      break;
    }
  }
  const double fwhm0 = std::max(right - left, 2.0 * step);
  const double amp_scale = std::max(ymax, std::numeric_limits<double>::min());
  const double x_mid = x[imax];

  std::vector<double> wts(n, 1.0);
  if (options.poisson_weights) {
    for (std::size_t i = 0; i < n; ++i) wts[i] = 1.0 / std::sqrt(y[i] + 1.0);
  }

  // p = [(center - x_mid) / fwhm0, ln(fwhm / fwhm0), eta, amplitude / scale, background / scale]
  const auto m = static_cast<Eigen::Index>(n);
  auto problem = [&](const lsq::Vector& p, lsq::Vector& r, lsq::Matrix* J) {
    const double c = x_mid + p(0) * fwhm0;
    const double w = fwhm0 * std::exp(p(1));
    const double eta = p(2);
    const double amp = p(3) * amp_scale;
    const double bg = p(4) * amp_scale;
    r.resize(m);
    if (J) J->resize(m, 5);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double u = (x[k] - c) / w;
      const double g = std::exp(-4.0 * std::numbers::ln2 * u * u);
      const double l = 1.0 / (1.0 + 4.0 * u * u);
      const double shape = eta * l + (1.0 - eta) * g;
      r(i) = wts[k] * (amp * shape + bg - y[k]);
      if (J) {
        // d shape / du
        const double dg = -8.0 * std::numbers::ln2 * u * g;
        const double dl = -8.0 * u * l * l;
        const double ds_du = eta * dl + (1.0 - eta) * dg;
        (*J)(i, 0) = wts[k] * amp * ds_du * (-fwhm0 / w);
        (*J)(i, 1) = wts[k] * amp * ds_du * (-u);
        (*J)(i, 2) = wts[k] * amp * (l - g);
        (*J)(i, 3) = wts[k] * amp_scale * shape;
        (*J)(i, 4) = wts[k] * amp_scale;
      }
    }
    return r.allFinite();
  };

  lsq::Options opt;
  opt.max_iterations = options.max_iterations;
  opt.x_tol = options.x_tol;
  const double span = x.back() - x.front();
  opt.lower = lsq::Vector(5);
  opt.upper = lsq::Vector(5);
  opt.lower << (x.front() - x_mid) / fwhm0, std::log(0.25 * step / fwhm0), 0.0, 0.0, 0.0;
  opt.upper << (x.back() - x_mid) / fwhm0, std::log(10.0 * span / fwhm0), 1.0,
      std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity();
  lsq::Vector p0(5);
  p0 << 0.0, 0.0, 0.5, (ymax - ymin) / amp_scale, ymin / amp_scale;

  const auto res = lsq::levenberg_marquardt(problem, p0, opt);
  if (!res.converged) {
    throw Error(Errc::no_convergence, "Pseudo-Voigt fit did not converge in " +
                                          std::to_string(options.max_iterations) + " iterations");
  }
  PeakFit fit;
  fit.iterations = res.iterations;
  auto& out = fit.params;
  out.center = x_mid + res.x(0) * fwhm0;
  out.fwhm = fwhm0 * std::exp(res.x(1));
  out.eta = res.x(2);
  out.amplitude = res.x(3) * amp_scale;
  out.background = res.x(4) * amp_scale;

  const auto cov = lsq::covariance(res.jacobian, res.residual);
  if (cov) {
    const lsq::Matrix& C = *cov;
    auto sd = [&](int i) { return std::sqrt(std::max(0.0, C(i, i))); };
    out.std_errors.center = sd(0) * fwhm0;
    out.std_errors.fwhm = sd(1) * out.fwhm;
    out.std_errors.eta = sd(2);
    out.std_errors.amplitude = sd(3) * amp_scale;
    out.std_errors.background = sd(4) * amp_scale;
  } else {
    constexpr double inf = std::numeric_limits<double>::infinity();
    out.std_errors = {inf, inf, inf, inf, inf};
    fit.non_identifiable = true;
    fit.warnings.emplace_back("covariance is singular; peak shape is not identifiable");
  }

  const double rms = std::sqrt(2.0 * res.cost / static_cast<double>(n));
  if (!(out.amplitude > 3.0 * rms) || out.amplitude <= 1e-9 * amp_scale) {
    fit.non_identifiable = true;
    fit.warnings.emplace_back("peak amplitude is not significant against the residual scatter");
  }
  if (out.fwhm < 2.0 * step) {
    fit.non_identifiable = true;
    fit.warnings.emplace_back("fitted width is below two angle steps");
  }
  return fit;
}

enum class TaPhase { alpha_110, beta_002, unclassified, ambiguous };

inline constexpr double kAlphaTa110 = 38.32;  // 2-theta, degrees
inline constexpr double kBetaTa002 = 33.68;

inline std::string to_string(TaPhase phase) {
  switch (phase) {
    case TaPhase::alpha_110: return "alpha-Ta(110)";
    case TaPhase::beta_002: return "beta-Ta(002)";
    case TaPhase::unclassified: return "unclassified";
    case TaPhase::ambiguous: return "ambiguous";
  }
  return "unclassified";
}

inline TaPhase identify_phase(double center_2theta, double tolerance = 0.5) {
  if (!(tolerance > 0.0)) {
    throw Error(Errc::precondition, "phase tolerance must be > 0");
  }
  const bool alpha = std::abs(center_2theta - kAlphaTa110) <= tolerance;
  const bool beta = std::abs(center_2theta - kBetaTa002) <= tolerance;
  if (alpha && beta) return TaPhase::ambiguous;
  if (alpha) return TaPhase::alpha_110;
  if (beta) return TaPhase::beta_002;
  return TaPhase::unclassified;
}

}  // namespace resq
