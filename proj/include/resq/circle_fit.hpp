#pragma once

// Circle-fit extraction of notch resonator parameters.
//
// Pipeline: remove_delay -> fit_circle -> fit_phase -> extract_params ->
// joint refinement of all seven parameters on the complex residuals. The
// staged part only provides the starting point; the joint least-squares
// problem defines the reported values and their covariance.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "resq/core_model.hpp"
#include "resq/least_squares.hpp"

namespace resq {

struct CircleGeometry {
  cplx center;
  double radius = 0.0;
};

struct DelayCorrection {
  ComplexTransmissionTrace trace;  // s21 * e^{+2 pi i f tau}
  double tau = 0.0;
};

struct PhaseFit {
  double f_r = 0.0;
  double q_l = 0.0;
  double theta0 = 0.0;
};

struct CircleFitOptions {
  bool refine = true;
  int max_iterations = 1000;
  double x_tol = 1e-10;
};

namespace detail {

inline double wrap_angle(double x) {
  x = std::remainder(x, constants::two_pi);
  return x;
}

inline std::vector<double> unwrap(std::vector<double> phase) {
  for (std::size_t i = 1; i < phase.size(); ++i) {
    phase[i] = phase[i - 1] + wrap_angle(phase[i] - phase[i - 1]);
  }
  return phase;
}

inline double frequency_span(const ComplexTransmissionTrace& t) {
  return t.frequencies.back() - t.frequencies.front();
}

inline double reference_frequency(const ComplexTransmissionTrace& t) {
  return 0.5 * (t.frequencies.front() + t.frequencies.back());
}

}  // namespace detail

/// Algebraic (Taubin) circle fit. Exact for points lying on a circle.
inline CircleGeometry fit_circle(std::span<const cplx> points) {
  const std::size_t n = points.size();
  if (n < 3) {
    throw Error(Errc::collinear_points, "circle fit needs at least 3 points");
  }
  cplx mean{0.0, 0.0};
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(n);

  double spread = 0.0;
  for (const auto& p : points) spread += std::norm(p - mean);
  spread /= static_cast<double>(n);
  const double scale_ref = std::max(std::norm(mean), spread);
  if (!(spread > 1e-26 * scale_ref) || !(spread > 0.0)) {
    throw Error(Errc::degenerate_trace, "all points coincide");
  }
  // Work in coordinates centered on the centroid and scaled to unit spread.
  const double s = std::sqrt(spread);

  double mxx = 0, myy = 0, mxy = 0, mxz = 0, myz = 0, mzz = 0;
  for (const auto& p : points) {
    const double x = (p.real() - mean.real()) / s;
    const double y = (p.imag() - mean.imag()) / s;
    const double z = x * x + y * y;
    mxx += x * x;
    myy += y * y;
    mxy += x * y;
    mxz += x * z;
    myz += y * z;
    mzz += z * z;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  mxx *= inv_n; myy *= inv_n; mxy *= inv_n;
  mxz *= inv_n; myz *= inv_n; mzz *= inv_n;

  const double mz = mxx + myy;
  const double cov_xy = mxx * myy - mxy * mxy;
  const double var_z = mzz - mz * mz;
  const double a3 = 4.0 * mz;
  const double a2 = -3.0 * mz * mz - mzz;
  const double a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
  const double a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) -
                    var_z * cov_xy;
  const double a22 = a2 + a2;
  const double a33 = 3.0 * a3;

  // Newton on the characteristic polynomial, starting from 0 (the root
  // of interest is the smallest non-negative one).
  double x = 0.0;
  double y = std::numeric_limits<double>::max();
  for (int iter = 0; iter < 100; ++iter) {
    const double y_old = y;
    y = a0 + x * (a1 + x * (a2 + x * a3));
    if (std::abs(y) > std::abs(y_old)) {
      break;
    }
    const double dy = a1 + x * (a22 + x * a33);
    if (dy == 0.0) break;
    const double x_old = x;
    x = x_old - y / dy;
    if (!std::isfinite(x)) {
      x = x_old;
      break;
    }
    if (x != 0.0 && std::abs((x - x_old) / x) < 1e-15) break;
    if (x < 0.0) {
      x = 0.0;
      break;
    }
  }

  const double det = x * x - x * mz + cov_xy;
  if (!(std::abs(det) > 1e-12 * mz * mz)) {
    throw Error(Errc::collinear_points, "points are collinear within tolerance");
  }
  const double cx = (mxz * (myy - x) - myz * mxy) / det / 2.0;
  const double cy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
  CircleGeometry circle;
  circle.center = mean + s * cplx(cx, cy);
  circle.radius = s * std::sqrt(cx * cx + cy * cy + mz);
  if (!std::isfinite(circle.radius) || !(circle.radius > 0.0) ||
      !std::isfinite(circle.center.real()) || !std::isfinite(circle.center.imag())) {
    throw Error(Errc::collinear_points, "circle fit produced a non-finite circle");
  }
  return circle;
}

/// Mean squared radial residual of points about a circle.
inline double circle_residual(std::span<const cplx> points, const CircleGeometry& c) {
  double sum = 0.0;
  for (const auto& p : points) {
    const double d = std::abs(p - c.center) - c.radius;
    sum += d * d;
  }
  return sum / static_cast<double>(points.size());
}

namespace detail {

inline void apply_delay(std::span<const double> f, std::span<const cplx> s21, double tau,
                        std::vector<cplx>& out) {
  out.resize(s21.size());
  for (std::size_t i = 0; i < s21.size(); ++i) {
    out[i] = s21[i] * std::polar(1.0, constants::two_pi * f[i] * tau);
  }
}

inline double delay_objective(std::span<const double> f, std::span<const cplx> s21, double tau,
                              std::vector<cplx>& scratch) {
  apply_delay(f, s21, tau, scratch);
  try {
    return circle_residual(scratch, fit_circle(scratch));
  } catch (const Error&) {
    // Degenerate loci are scored by their spread about the centroid.
    cplx mean{0.0, 0.0};
    for (const auto& p : scratch) mean += p;
    mean /= static_cast<double>(scratch.size());
    double var = 0.0;
    for (const auto& p : scratch) var += std::norm(p - mean);
    return var / static_cast<double>(scratch.size());
  }
}

/// Least-squares slope of unwrapped phase over [first, last).
inline double phase_slope(const ComplexTransmissionTrace& t, std::size_t first, std::size_t last) {
  std::vector<double> ph;
  ph.reserve(last - first);
  for (std::size_t i = first; i < last; ++i) ph.push_back(std::arg(t.s21[i]));
  ph = unwrap(std::move(ph));
  double fm = 0.0, pm = 0.0;
  const double m = static_cast<double>(ph.size());
  for (std::size_t i = 0; i < ph.size(); ++i) {
    fm += t.frequencies[first + i];
    pm += ph[i];
  }
  fm /= m;
  pm /= m;
  double sfp = 0.0, sff = 0.0;
  for (std::size_t i = 0; i < ph.size(); ++i) {
    const double df = t.frequencies[first + i] - fm;
    sfp += df * (ph[i] - pm);
    sff += df * df;
  }
  return sff > 0.0 ? sfp / sff : 0.0;
}

}  // namespace detail

/// Estimates and removes the electrical delay. The delay is the value that
/// makes the delay-corrected locus closest to a circle: a coarse grid
/// around the off-resonant phase slope, then golden-section refinement.
inline DelayCorrection remove_delay(const ComplexTransmissionTrace& trace) {
  validate(trace);
  const std::size_t n = trace.size();
  bool all_equal = true;
  for (std::size_t i = 1; i < n && all_equal; ++i) all_equal = trace.s21[i] == trace.s21[0];
  if (all_equal) {
    throw Error(Errc::degenerate_trace, "all s21 samples are identical");
  }

  const double span = detail::frequency_span(trace);
  const double df_sample = span / static_cast<double>(n - 1);
  const double tau_bound = 1.0 / df_sample;

  // Off-resonant phase slope from both ends of the sweep.
  const std::size_t edge = std::max<std::size_t>(5, n / 10);
  const double slope =
      0.5 * (detail::phase_slope(trace, 0, edge) + detail::phase_slope(trace, n - edge, n));
  double tau0 = std::clamp(-slope / constants::two_pi, -tau_bound, tau_bound);

  std::vector<cplx> scratch;
  auto objective = [&](double tau) {
    return detail::delay_objective(trace.frequencies, trace.s21, tau, scratch);
  };

  const double step = 1.0 / (8.0 * span);
  constexpr int half_width = 16;  // +-2 phase windings across the span
  double best_tau = tau0;
  double best_val = objective(tau0);
  for (int k = -half_width; k <= half_width; ++k) {
    const double t = std::clamp(tau0 + k * step, -tau_bound, tau_bound);
    const double v = objective(t);
    if (v < best_val) {
      best_val = v;
      best_tau = t;
    }
  }

  // Golden-section search on [best - step, best + step].
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = std::max(best_tau - step, -tau_bound);
  double hi = std::min(best_tau + step, tau_bound);
  double x1 = hi - gr * (hi - lo);
  double x2 = lo + gr * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  const double tol = 1e-9 / span;
  while (hi - lo > tol) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = objective(x2);
    }
  }
  double tau = 0.5 * (lo + hi);
  if (best_val < objective(tau)) tau = best_tau;

  DelayCorrection out;
  out.trace = trace;
  out.tau = tau;
  detail::apply_delay(trace.frequencies, trace.s21, tau, out.trace.s21);
  return out;
}

/// Angle of a point on the resonance circle, seen from the circle center.
inline double phase_model(double f, double f_r, double q_l, double theta0) {
  return theta0 + 2.0 * std::atan(2.0 * q_l * (1.0 - f / f_r));
}

inline PhaseFit fit_phase(const ComplexTransmissionTrace& corrected, const CircleGeometry& circle,
                          int max_iterations = 1000) {
  const std::size_t n = corrected.size();
  const auto& f = corrected.frequencies;
  std::vector<double> theta(n);
  for (std::size_t i = 0; i < n; ++i) theta[i] = std::arg(corrected.s21[i] - circle.center);
  theta = detail::unwrap(std::move(theta));

  const double theta0_init = 0.5 * (theta.front() + theta.back());
  auto nearest = [&](double target) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(theta[i] - target) < std::abs(theta[best] - target)) best = i;
    }
    return best;
  };
  const double f_ref = detail::reference_frequency(corrected);
  const double span = detail::frequency_span(corrected);
  const double fr_init = f[nearest(theta0_init)];
  const double f_upper = f[nearest(theta0_init - constants::pi / 2)];
  const double f_lower = f[nearest(theta0_init + constants::pi / 2)];
  double ql_init = f_upper > f_lower ? fr_init / (f_upper - f_lower) : fr_init / (span / 20.0);
  ql_init = std::max(ql_init, 1.0);

  const double f_scale = fr_init / ql_init;
  lsq::Vector x0(3);
  x0 << theta0_init, std::log(ql_init), (fr_init - f_ref) / f_scale;

  auto problem = [&](const lsq::Vector& x, lsq::Vector& r, lsq::Matrix* J) {
    const double th0 = x(0);
    const double ql = std::exp(x(1));
    const double fr = f_ref + x(2) * f_scale;
    if (!(fr > 0.0)) return false;
    r.resize(static_cast<Eigen::Index>(n));
    if (J) J->resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = 2.0 * ql * (fr - f[i]) / fr;
      const auto k = static_cast<Eigen::Index>(i);
      r(k) = detail::wrap_angle(th0 + 2.0 * std::atan(u) - theta[i]);
      if (J) {
        const double dth_du = 2.0 / (1.0 + u * u);
        (*J)(k, 0) = 1.0;
        (*J)(k, 1) = dth_du * u;
        (*J)(k, 2) = dth_du * 2.0 * ql * f[i] / (fr * fr) * f_scale;
      }
    }
    return true;
  };

  lsq::Options opt;
  opt.max_iterations = max_iterations;
  opt.lower = lsq::Vector(3);
  opt.upper = lsq::Vector(3);
  opt.lower << -std::numeric_limits<double>::infinity(), 0.0,
      (f.front() - f_ref) / f_scale;
  opt.upper << std::numeric_limits<double>::infinity(), std::log(1e12),
      (f.back() - f_ref) / f_scale;
  const auto res = lsq::levenberg_marquardt(problem, x0, opt);
  if (!res.converged) {
    throw Error(Errc::no_convergence, "phase fit did not converge in " +
                                          std::to_string(max_iterations) + " iterations");
  }
  PhaseFit out;
  out.theta0 = detail::wrap_angle(res.x(0));
  out.q_l = std::exp(res.x(1));
  out.f_r = f_ref + res.x(2) * f_scale;
  return out;
}

namespace detail {

/// Internal parameterisation of the joint fit:
///   x = [(f_r - f_ref)/f_scale, ln q_l, ln q_c_mag, phi, ln a, alpha_ref, tau * span]
/// where alpha_ref is the baseline phase at f_ref. This keeps the
/// alpha/tau pair well conditioned when f_ref >> span.
struct NotchParameterization {
  double f_ref = 0.0;
  double f_scale = 1.0;
  double span = 1.0;

  lsq::Vector to_internal(const NotchModelParams& p) const {
    lsq::Vector x(7);
    x << (p.f_r - f_ref) / f_scale, std::log(p.q_l), std::log(p.q_c_mag), p.phi,
        std::log(p.a), p.alpha - constants::two_pi * f_ref * p.tau, p.tau * span;
    return x;
  }

  NotchModelParams from_internal(const lsq::Vector& x) const {
    NotchModelParams p;
    p.f_r = f_ref + x(0) * f_scale;
    p.q_l = std::exp(x(1));
    p.q_c_mag = std::exp(x(2));
    p.phi = x(3);
    p.a = std::exp(x(4));
    p.tau = x(6) / span;
    p.alpha = wrap_angle(x(5) + constants::two_pi * f_ref * p.tau);
    return p;
  }
};

inline NotchParameterization parameterization_for(const ComplexTransmissionTrace& t,
                                                  const NotchModelParams& p) {
  NotchParameterization pz;
  pz.f_ref = reference_frequency(t);
  pz.f_scale = p.f_r / p.q_l;
  pz.span = frequency_span(t);
  return pz;
}

/// Residuals [Re; Im] of model - data and their Jacobian in the internal
/// parameterisation.
inline bool notch_residuals(const NotchParameterization& pz, std::span<const double> f,
                            std::span<const cplx> z, const lsq::Vector& x, lsq::Vector& r,
                            lsq::Matrix* J) {
  const double fr = pz.f_ref + x(0) * pz.f_scale;
  const double ql = std::exp(x(1));
  const double qc = std::exp(x(2));
  const double phi = x(3);
  const double a = std::exp(x(4));
  const double alpha_ref = x(5);
  const double tau = x(6) / pz.span;
  if (!(fr > 0.0) || !std::isfinite(ql) || !std::isfinite(qc) || !std::isfinite(a)) return false;
  const auto n = static_cast<Eigen::Index>(f.size());
  r.resize(2 * n);
  if (J) J->resize(2 * n, 7);
  const cplx k = (ql / qc) * std::polar(1.0, phi);
  const cplx i1{0.0, 1.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double fi = f[static_cast<std::size_t>(i)];
    const double dfr = fi - pz.f_ref;
    const cplx env = a * std::polar(1.0, alpha_ref - constants::two_pi * dfr * tau);
    const cplx d = cplx(1.0, 2.0 * ql * (fi - fr) / fr);
    const cplx kd = k / d;
    const cplx s = env * (1.0 - kd);
    const cplx res = s - z[static_cast<std::size_t>(i)];
    r(i) = res.real();
    r(n + i) = res.imag();
    if (J) {
      const cplx cols[7] = {
          -env * kd / d * (i1 * 2.0 * ql * fi / (fr * fr)) * pz.f_scale,
          -env * kd / d,
          env * kd,
          -env * i1 * kd,
          s,
          i1 * s,
          -i1 * constants::two_pi * dfr / pz.span * s,
      };
      for (int c = 0; c < 7; ++c) {
        (*J)(i, c) = cols[c].real();
        (*J)(n + i, c) = cols[c].imag();
      }
    }
  }
  return true;
}

}  // namespace detail

struct ErrorEstimate {
  NotchStdErrors std_errors;
  double q_i_rel_error = 0.0;
  double residual_rms = 0.0;
};

/// Standard errors from the Jacobian covariance of the joint complex
/// least-squares problem, scaled by the residual variance. The relative
/// error of q_i is propagated to first order through (q_l, q_c_mag, phi).
inline ErrorEstimate estimate_errors(const ResonatorFitResult& result,
                                     const ComplexTransmissionTrace& trace) {
  const auto& p = result.params;
  const auto pz = detail::parameterization_for(trace, p);
  const lsq::Vector x = pz.to_internal(p);
  lsq::Vector r;
  lsq::Matrix J;
  if (!detail::notch_residuals(pz, trace.frequencies, trace.s21, x, r, &J)) {
    throw Error(Errc::singular_covariance, "model cannot be evaluated at the fitted parameters");
  }
  const auto cov = lsq::covariance(J, r);
  if (!cov) {
    throw Error(Errc::singular_covariance, "Jacobian of the resonance fit is rank-deficient");
  }
  const lsq::Matrix& C = *cov;
  auto sd = [&](int i) { return std::sqrt(std::max(0.0, C(i, i))); };

  ErrorEstimate out;
  out.std_errors.f_r = sd(0) * pz.f_scale;
  out.std_errors.q_l = sd(1) * p.q_l;
  out.std_errors.q_c_mag = sd(2) * p.q_c_mag;
  out.std_errors.phi = sd(3);
  out.std_errors.a = sd(4) * p.a;
  out.std_errors.tau = sd(6) / pz.span;
  const double g = constants::two_pi * pz.f_ref / pz.span;
  out.std_errors.alpha = std::sqrt(std::max(0.0, C(5, 5) + g * g * C(6, 6) + 2.0 * g * C(5, 6)));

  const double qi = 1.0 / p.inverse_internal_q();
  Eigen::Vector3d grad(qi * qi / p.q_l, -qi * qi * std::cos(p.phi) / p.q_c_mag,
                       -qi * qi * std::sin(p.phi) / p.q_c_mag);
  const Eigen::Matrix3d sub = C.block<3, 3>(1, 1);
  out.q_i_rel_error = std::sqrt(std::max(0.0, grad.dot(sub * grad))) / std::abs(qi);
  out.residual_rms = std::sqrt(r.squaredNorm() / static_cast<double>(trace.size()));
  return out;
}

/// Recovers the model parameters from the circle geometry and phase fit.
/// The off-resonant point sits diametrically opposite the resonance point.
inline ResonatorFitResult extract_params(const ComplexTransmissionTrace& trace, double tau,
                                         const CircleGeometry& circle, const PhaseFit& phase) {
  const cplx on_res = circle.center + circle.radius * std::polar(1.0, phase.theta0);
  const cplx off_res = circle.center - circle.radius * std::polar(1.0, phase.theta0);
  ResonatorFitResult out;
  auto& p = out.params;
  p.f_r = phase.f_r;
  p.q_l = phase.q_l;
  p.tau = tau;
  p.a = std::abs(off_res);
  p.alpha = std::arg(off_res);
  const double depth = 2.0 * circle.radius / p.a;
  p.q_c_mag = p.q_l / depth;
  p.phi = std::arg((off_res - on_res) / off_res);
  out.q_i = internal_q(p.q_l, p.q_c_mag, p.phi);
  const auto err = estimate_errors(out, trace);
  out.std_errors = err.std_errors;
  out.q_i_rel_error = err.q_i_rel_error;
  out.residual_rms = err.residual_rms;
  return out;
}

namespace detail {

inline NotchModelParams refine_joint(const ComplexTransmissionTrace& trace,
                                     const NotchModelParams& init, const CircleFitOptions& opt) {
  const auto pz = parameterization_for(trace, init);
  auto problem = [&](const lsq::Vector& x, lsq::Vector& r, lsq::Matrix* J) {
    return notch_residuals(pz, trace.frequencies, trace.s21, x, r, J);
  };
  lsq::Options lo;
  lo.max_iterations = opt.max_iterations;
  lo.x_tol = opt.x_tol;
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr double half_pi = constants::pi / 2 - 1e-9;
  lo.lower = lsq::Vector::Constant(7, -inf);
  lo.upper = lsq::Vector::Constant(7, inf);
  lo.lower(3) = -half_pi;
  lo.upper(3) = half_pi;
  const auto res = lsq::levenberg_marquardt(problem, pz.to_internal(init), lo);
  if (!res.converged) {
    throw Error(Errc::no_convergence, "joint refinement did not converge in " +
                                          std::to_string(opt.max_iterations) + " iterations");
  }
  return pz.from_internal(res.x);
}

template <class Fn>
auto run_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw e.with_stage(stage);
  }
}

}  // namespace detail

/// Full circle-fit pipeline. Errors carry the name of the failing stage.
inline ResonatorFitResult fit_resonance(const ComplexTransmissionTrace& trace,
                                        const CircleFitOptions& opt = {}) {
  detail::run_stage("validate", [&] {
    validate(trace);
    return 0;
  });
  const auto delay = detail::run_stage("remove_delay", [&] { return remove_delay(trace); });
  const auto circle =
      detail::run_stage("fit_circle", [&] { return fit_circle(delay.trace.s21); });
  const auto phase = detail::run_stage(
      "fit_phase", [&] { return fit_phase(delay.trace, circle, opt.max_iterations); });
  auto result = detail::run_stage(
      "extract_params", [&] { return extract_params(trace, delay.tau, circle, phase); });
  if (opt.refine) {
    result = detail::run_stage("refine", [&] {
      ResonatorFitResult r;
      r.params = detail::refine_joint(trace, result.params, opt);
      r.q_i = internal_q(r.params.q_l, r.params.q_c_mag, r.params.phi);
      const auto err = estimate_errors(r, trace);
      r.std_errors = err.std_errors;
      r.q_i_rel_error = err.q_i_rel_error;
      r.residual_rms = err.residual_rms;
      return r;
    });
  }
  detail::run_stage("sanity", [&] {
    const auto& p = result.params;
    const double depth = p.a * p.q_l / p.q_c_mag;
    const double df_sample =
        detail::frequency_span(trace) / static_cast<double>(trace.size() - 1);
    if (!(depth > 3.0 * result.residual_rms)) {
      throw Error(Errc::no_resonance, "resonance depth is below three times the residual rms");
    }
    if (!(p.f_r / p.q_l >= df_sample)) {
      throw Error(Errc::no_resonance, "fitted linewidth is below the frequency sample spacing");
    }
    if (p.f_r < trace.frequencies.front() || p.f_r > trace.frequencies.back()) {
      throw Error(Errc::no_resonance, "fitted resonance frequency lies outside the sweep");
    }
    return 0;
  });
  return result;
}

/// Keeps results whose relative q_i error is <= threshold, in order.
inline std::vector<ResonatorFitResult> filter_by_error(std::span<const ResonatorFitResult> results,
                                                       double threshold = 0.20) {
  std::vector<ResonatorFitResult> kept;
  for (const auto& r : results) {
    if (r.q_i_rel_error <= threshold) kept.push_back(r);
  }
  return kept;
}

}  // namespace resq
