#pragma once

// Photon-number binning of internal Q factors and the TLS loss model
//   delta(n) = F delta_TLS / sqrt(1 + (n / n_c)^beta) + delta_0
// fitted in loss space (delta = 1 / Q_i).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resq/errors.hpp"
#include "resq/least_squares.hpp"

namespace resq {

struct PhotonPoint {
  double n = 0.0;
  double q_i = 0.0;
  double q_i_rel_error = 0.0;
};

struct EnsembleBin {
  double n_center = 0.0;
  double mean_q_i = 0.0;
  double std_q_i = 0.0;  // population standard deviation
  std::size_t count = 0;
};

/// <Q_i>(n) with spreads, bins ordered by strictly increasing n_center.
struct EnsembleCurve {
  std::vector<EnsembleBin> bins;
};

struct TLSStdErrors {
  double f_delta_tls = 0.0;
  double delta0 = 0.0;
  double n_c = 0.0;
  double beta = 0.0;
};

/// Only the product F * delta_TLS^0 is identifiable from delta(n).
struct TLSParams {
  double f_delta_tls = 0.0;
  double delta0 = 0.0;
  double n_c = 1.0;
  double beta = 0.5;
  TLSStdErrors std_errors;
};

inline double tls_delta(double n, const TLSParams& p) {
  return p.f_delta_tls / std::sqrt(1.0 + std::pow(n / p.n_c, p.beta)) + p.delta0;
}

struct BinningScheme {
  enum class Kind { log_spaced, per_point };
  Kind kind = Kind::log_spaced;
  int per_decade = 5;

  static BinningScheme log_spaced(int per_decade) { return {Kind::log_spaced, per_decade}; }
  static BinningScheme per_point() { return {Kind::per_point, 0}; }
};

/// Groups points into log-spaced photon-number bins anchored at decade
/// boundaries (edges at 10^(k / per_decade)). A bin's n_center is the
/// geometric mean of its members' photon numbers. The per-point scheme
/// keeps every distinct n as its own bin.
inline EnsembleCurve bin_by_photon(std::span<const PhotonPoint> points,
                                   const BinningScheme& scheme = {}) {
  if (scheme.kind == BinningScheme::Kind::log_spaced && scheme.per_decade < 1) {
    throw Error(Errc::precondition, "bins per decade must be >= 1");
  }
  struct Acc {
    double sum_log_n = 0.0;
    std::vector<double> q;
  };
  std::map<long long, Acc> by_key;
  std::map<double, Acc> by_n;
  for (const auto& p : points) {
    if (!(p.n > 0.0) || !std::isfinite(p.n) || !(p.q_i > 0.0) || !std::isfinite(p.q_i)) {
      throw Error(Errc::precondition, "photon points need finite n > 0 and q_i > 0");
    }
    Acc* acc = nullptr;
    if (scheme.kind == BinningScheme::Kind::per_point) {
      acc = &by_n[p.n];
    } else {
      const auto key =
          static_cast<long long>(std::floor(std::log10(p.n) * scheme.per_decade + 1e-12));
      acc = &by_key[key];
    }
    acc->sum_log_n += std::log(p.n);
    acc->q.push_back(p.q_i);
  }
  auto finish = [](const Acc& acc) {
    EnsembleBin b;
    b.count = acc.q.size();
    const double m = static_cast<double>(b.count);
    b.n_center = std::exp(acc.sum_log_n / m);
    double sum = 0.0;
    for (double q : acc.q) sum += q;
    b.mean_q_i = sum / m;
    double ss = 0.0;
    for (double q : acc.q) ss += (q - b.mean_q_i) * (q - b.mean_q_i);
    b.std_q_i = b.count > 1 ? std::sqrt(ss / m) : 0.0;
    return b;
  };
  EnsembleCurve curve;
  for (const auto& [key, acc] : by_key) curve.bins.push_back(finish(acc));
  for (const auto& [n, acc] : by_n) curve.bins.push_back(finish(acc));
  return curve;
}

struct TLSFitOptions {
  int max_iterations = 1000;
  double x_tol = 1e-10;
};

struct TLSFit {
  TLSParams params;
  bool non_identifiable = false;
  std::vector<std::string> warnings;
  int iterations = 0;
  int starts = 1;
  double weighted_rss = 0.0;
};

namespace detail {

/// Per-bin weights on delta residuals. Bins with measured spread get
/// 1 / sigma_delta^2 with sigma_delta = sigma_Q / Q^2; bins without one get
/// the median of those. With no spread information at all the weights are
/// 1 / delta^2 (constant relative error).
inline std::vector<double> tls_weights(const EnsembleCurve& curve) {
  std::vector<double> w(curve.bins.size(), 0.0);
  std::vector<double> valid;
  for (std::size_t i = 0; i < curve.bins.size(); ++i) {
    const auto& b = curve.bins[i];
    if (b.count > 1 && b.std_q_i > 0.0) {
      const double sigma_delta = b.std_q_i / (b.mean_q_i * b.mean_q_i);
      w[i] = 1.0 / (sigma_delta * sigma_delta);
      valid.push_back(w[i]);
    }
  }
  if (valid.empty()) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double q = curve.bins[i].mean_q_i;
      w[i] = q * q;
    }
    return w;
  }
  std::sort(valid.begin(), valid.end());
  const std::size_t m = valid.size();
  const double median = m % 2 ? valid[m / 2] : 0.5 * (valid[m / 2 - 1] + valid[m / 2]);
  for (auto& x : w) {
    if (x == 0.0) x = median;
  }
  return w;
}

inline TLSParams tls_initial_guess(const EnsembleCurve& curve) {
  const auto& bins = curve.bins;
  TLSParams p;
  const double d_low = 1.0 / bins.front().mean_q_i;
  const double d_high = 1.0 / bins.back().mean_q_i;
  p.delta0 = std::max(d_high, 0.0);
  p.f_delta_tls = std::max(d_low - p.delta0, 0.0);
  p.beta = 0.5;
  // n where the TLS term has fallen to 1/sqrt(2) of its low-power value.
  const double target = p.delta0 + p.f_delta_tls / std::sqrt(2.0);
  p.n_c = std::sqrt(bins.front().n_center * bins.back().n_center);
  for (std::size_t i = 1; i < bins.size(); ++i) {
    const double d0 = 1.0 / bins[i - 1].mean_q_i;
    const double d1 = 1.0 / bins[i].mean_q_i;
    if ((d0 - target) * (d1 - target) <= 0.0 && d0 != d1) {
      const double t = (d0 - target) / (d0 - d1);
      const double l0 = std::log(bins[i - 1].n_center);
      const double l1 = std::log(bins[i].n_center);
      p.n_c = std::exp(l0 + t * (l1 - l0));
      break;
    }
  }
  p.n_c = std::clamp(p.n_c, 1e-4, 1e8);
  return p;
}

}  // namespace detail

inline constexpr double kTlsMinNc = 1e-4;
inline constexpr double kTlsMaxNc = 1e8;
inline constexpr double kTlsMinBeta = 1e-3;
inline constexpr double kTlsMaxBeta = 2.0;

/// Weighted nonlinear least squares of 1/<Q_i> against the TLS model.
/// Falls back to 8 log-perturbed starts when the first start fails.
inline TLSFit fit_tls(const EnsembleCurve& curve, std::optional<TLSParams> init = std::nullopt,
                      const TLSFitOptions& options = {}) {
  const auto& bins = curve.bins;
  if (bins.empty()) {
    throw Error(Errc::precondition, "TLS fit needs a non-empty curve");
  }
  const auto m = static_cast<Eigen::Index>(bins.size());
  const std::vector<double> w = detail::tls_weights(curve);
  double delta_scale = 0.0;
  for (const auto& b : bins) delta_scale = std::max(delta_scale, 1.0 / b.mean_q_i);

  // x = [F delta / scale, delta0 / scale, log10 n_c, beta]
  auto problem = [&](const lsq::Vector& x, lsq::Vector& r, lsq::Matrix* J) {
    const double f = x(0) * delta_scale;
    const double d0 = x(1) * delta_scale;
    const double nc = std::pow(10.0, x(2));
    const double beta = x(3);
    r.resize(m);
    if (J) J->resize(m, 4);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& b = bins[static_cast<std::size_t>(i)];
      const double sw = std::sqrt(w[static_cast<std::size_t>(i)]);
      const double ratio = b.n_center / nc;
      const double t = std::pow(ratio, beta);
      const double s = std::sqrt(1.0 + t);
      r(i) = sw * (f / s + d0 - 1.0 / b.mean_q_i);
      if (J) {
        const double common = t > 0.0 ? -0.5 * f * t / (s * s * s) : 0.0;
        const double lr = std::log(ratio);
        (*J)(i, 0) = sw * delta_scale / s;
        (*J)(i, 1) = sw * delta_scale;
        (*J)(i, 2) = sw * common * (-beta) * std::log(10.0);
        (*J)(i, 3) = sw * common * lr;
      }
    }
    return r.allFinite();
  };

  lsq::Options opt;
  opt.max_iterations = options.max_iterations;
  opt.x_tol = options.x_tol;
  opt.lower = lsq::Vector(4);
  opt.upper = lsq::Vector(4);
  opt.lower << 0.0, 0.0, std::log10(kTlsMinNc), kTlsMinBeta;
  opt.upper << std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
      std::log10(kTlsMaxNc), kTlsMaxBeta;

  auto to_x = [&](const TLSParams& p) {
    lsq::Vector x(4);
    x << p.f_delta_tls / delta_scale, p.delta0 / delta_scale,
        std::log10(std::clamp(p.n_c, kTlsMinNc, kTlsMaxNc)),
        std::clamp(p.beta, kTlsMinBeta, kTlsMaxBeta);
    return x;
  };

  const TLSParams start = init.value_or(detail::tls_initial_guess(curve));
  TLSFit fit;
  std::optional<lsq::Result> best;
  auto attempt = [&](const TLSParams& p) {
    try {
      auto res = lsq::levenberg_marquardt(problem, to_x(p), opt);
      fit.iterations += res.iterations;
      if (res.converged && (!best || res.cost < best->cost)) best = std::move(res);
    } catch (const Error&) {
    }
  };
  attempt(start);
  if (!best) {
    constexpr double kNcFactors[] = {1e-2, 1e-1, 1e1, 1e2};
    constexpr double kBetas[] = {0.3, 1.0};
    for (double beta : kBetas) {
      for (double fac : kNcFactors) {
        TLSParams p = start;
        p.n_c = start.n_c * fac;
        p.beta = beta;
        p.f_delta_tls = std::max(start.f_delta_tls, 1e-3 * delta_scale) * std::sqrt(fac);
        ++fit.starts;
        attempt(p);
      }
    }
  }
  if (!best) {
    throw Error(Errc::no_convergence, "TLS fit did not converge from any of " +
                                          std::to_string(fit.starts) + " starts");
  }

  const lsq::Vector& x = best->x;
  fit.params.f_delta_tls = x(0) * delta_scale;
  fit.params.delta0 = x(1) * delta_scale;
  fit.params.n_c = std::pow(10.0, x(2));
  fit.params.beta = x(3);
  fit.weighted_rss = best->residual.squaredNorm();

  const auto cov = lsq::covariance(best->jacobian, best->residual);
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (cov) {
    const lsq::Matrix& C = *cov;
    auto sd = [&](int i) { return std::sqrt(std::max(0.0, C(i, i))); };
    fit.params.std_errors.f_delta_tls = sd(0) * delta_scale;
    fit.params.std_errors.delta0 = sd(1) * delta_scale;
    fit.params.std_errors.n_c = sd(2) * std::log(10.0) * fit.params.n_c;
    fit.params.std_errors.beta = sd(3);
  } else {
    fit.params.std_errors = {inf, inf, inf, inf};
    fit.non_identifiable = true;
    fit.warnings.emplace_back(
        "covariance is singular or there are fewer bins than parameters; "
        "n_c and beta are not identifiable");
  }
  if (cov && !(fit.params.std_errors.n_c <= fit.params.n_c)) {
    fit.non_identifiable = true;
    fit.warnings.emplace_back("standard error of n_c exceeds n_c");
  }
  if (bins.size() < 5) {
    fit.warnings.emplace_back("fewer than 5 bins; parameters are poorly constrained");
  }
  return fit;
}

/// (mean, std) of the bin closest to target_n in log distance; ties go to
/// the lower-n bin.
inline std::pair<double, double> low_power_q(const EnsembleCurve& curve, double target_n = 1.0) {
  if (curve.bins.empty()) {
    throw Error(Errc::precondition, "low_power_q needs a non-empty curve");
  }
  const double lt = std::log(target_n);
  const EnsembleBin* best = &curve.bins.front();
  double best_d = std::abs(std::log(best->n_center) - lt);
  for (const auto& b : curve.bins) {
    const double d = std::abs(std::log(b.n_center) - lt);
    // Bins are ordered by n, so strict < keeps the lower-n bin on ties.
    if (d < best_d - 1e-12 * std::max(1.0, best_d)) {
      best = &b;
      best_d = d;
    }
  }
  return {best->mean_q_i, best->std_q_i};
}

/// Drops the k highest-n bins.
inline EnsembleCurve exclude_nonlinear(const EnsembleCurve& curve, std::size_t k) {
  if (k >= curve.bins.size() && k > 0) {
    throw Error(Errc::empty_result, "excluding " + std::to_string(k) + " of " +
                                        std::to_string(curve.bins.size()) +
                                        " bins leaves nothing to fit");
  }
  EnsembleCurve out;
  out.bins.assign(curve.bins.begin(), curve.bins.end() - static_cast<std::ptrdiff_t>(k));
  return out;
}

/// Relative change (after - before) / before; empty where before == 0.
struct LossComparison {
  std::optional<double> f_delta_tls;
  std::optional<double> delta0;
  std::optional<double> n_c;
  std::optional<double> beta;
};

inline LossComparison compare_losses(const TLSParams& before, const TLSParams& after) {
  auto rel = [](double b, double a) -> std::optional<double> {
    if (b == 0.0) return std::nullopt;
    return (a - b) / b;
  };
  return {rel(before.f_delta_tls, after.f_delta_tls), rel(before.delta0, after.delta0),
          rel(before.n_c, after.n_c), rel(before.beta, after.beta)};
}

}  // namespace resq
