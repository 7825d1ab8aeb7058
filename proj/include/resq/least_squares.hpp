#pragma once

// Bounded Levenberg-Marquardt solver shared by every fit in the library.
//
// A problem is any callable `bool(const Vector& x, Vector& r, Matrix* J)`
// that fills the residual vector r (and the Jacobian when J is non-null).
// Returning false marks x as an invalid evaluation point; the solver treats
// that like a rejected step and increases damping.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "resq/errors.hpp"

namespace resq::lsq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Options {
  int max_iterations = 1000;
  // ||step|| <= x_tol * (||x|| + x_tol)
  double x_tol = 1e-10;
  // max_j |J_j . r| / (||J_j|| ||r||)
  double g_tol = 1e-13;
  // Empty vectors mean unbounded.
  Vector lower;
  Vector upper;
};

struct Result {
  Vector x;
  Vector residual;
  Matrix jacobian;
  double cost = 0.0;  // 0.5 * ||r||^2
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Vector clamp(const Vector& x, const Options& opt) {
  Vector out = x;
  if (opt.lower.size() == x.size()) out = out.cwiseMax(opt.lower);
  if (opt.upper.size() == x.size()) out = out.cwiseMin(opt.upper);
  return out;
}

inline bool gradient_small(const Matrix& J, const Vector& r, const Vector& g, double tol,
                           const std::vector<bool>& active) {
  const double rn = r.norm();
  if (rn == 0.0) return true;
  for (Eigen::Index j = 0; j < J.cols(); ++j) {
    if (active[static_cast<std::size_t>(j)]) continue;
    const double cn = J.col(j).norm();
    if (cn == 0.0) continue;
    if (std::abs(g(j)) > tol * cn * rn) return false;
  }
  return true;
}

/// Components pinned at a bound whose descent direction points outward.
inline std::vector<bool> active_set(const Vector& x, const Vector& g, const Options& opt) {
  std::vector<bool> active(static_cast<std::size_t>(x.size()), false);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const bool at_lower = opt.lower.size() == x.size() && x(j) <= opt.lower(j) && g(j) > 0.0;
    const bool at_upper = opt.upper.size() == x.size() && x(j) >= opt.upper(j) && g(j) < 0.0;
    active[static_cast<std::size_t>(j)] = at_lower || at_upper;
  }
  return active;
}

}  // namespace detail

template <class Problem>
Result levenberg_marquardt(Problem&& problem, const Vector& x0, const Options& opt = {}) {
  Result res;
  res.x = detail::clamp(x0, opt);
  Matrix J;
  Vector r;
  if (!problem(res.x, r, &J) || !r.allFinite() || !J.allFinite()) {
    throw Error(Errc::no_convergence, "model cannot be evaluated at the initial point");
  }
  double cost = 0.5 * r.squaredNorm();
  Matrix A = J.transpose() * J;
  Vector g = J.transpose() * r;
  Vector diag = A.diagonal().cwiseMax(std::numeric_limits<double>::min());
  double mu = 1e-3 * diag.maxCoeff();
  double nu = 2.0;

  Vector r_new;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    const auto active = detail::active_set(res.x, g, opt);
    if (cost == 0.0 || detail::gradient_small(J, r, g, opt.g_tol, active)) {
      res.converged = true;
      break;
    }
    Matrix damped = A;
    damped.diagonal() += mu * diag;
    Vector rhs = -g;
    for (Eigen::Index j = 0; j < damped.rows(); ++j) {
      if (!active[static_cast<std::size_t>(j)]) continue;
      damped.row(j).setZero();
      damped.col(j).setZero();
      damped(j, j) = 1.0;
      rhs(j) = 0.0;
    }
    Eigen::LDLT<Matrix> ldlt(damped);
    if (ldlt.info() != Eigen::Success) {
      mu *= nu;
      nu *= 2.0;
      continue;
    }
    Vector step = ldlt.solve(rhs);
    const Vector x_new = detail::clamp(res.x + step, opt);
    step = x_new - res.x;
    if (step.norm() <= opt.x_tol * (res.x.norm() + opt.x_tol)) {
      res.converged = true;
      break;
    }
    const bool ok = problem(x_new, r_new, nullptr) && r_new.allFinite();
    const double cost_new = ok ? 0.5 * r_new.squaredNorm() : std::numeric_limits<double>::infinity();
    const double predicted = -(g.dot(step) + 0.5 * step.dot(A * step));
    const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
    if (ok && rho > 0.0) {
      res.x = x_new;
      if (!problem(res.x, r, &J) || !J.allFinite()) {
        throw Error(Errc::no_convergence, "Jacobian evaluation failed");
      }
      cost = 0.5 * r.squaredNorm();
      A = J.transpose() * J;
      g = J.transpose() * r;
      diag = diag.cwiseMax(A.diagonal());
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      // No representable step reduces the cost: we are at the minimum to
      // machine precision.
      if (mu > 1e30 * diag.maxCoeff()) {
        res.converged = true;
        break;
      }
    }
  }
  res.residual = r;
  res.jacobian = J;
  res.cost = cost;
  return res;
}

/// Column-wise forward-difference Jacobian for problems without an
/// analytic derivative.
template <class ResidualFn>
Matrix numeric_jacobian(ResidualFn&& fn, const Vector& x, const Vector& r0) {
  Matrix J(r0.size(), x.size());
  Vector xp = x;
  Vector rp;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    fn(xp, rp);
    J.col(j) = (rp - r0) / h;
    xp(j) = x(j);
  }
  return J;
}

inline constexpr double kSingularRcond = 1e-12;

/// Parameter covariance s^2 (J^T J)^{-1} with s^2 = ||r||^2 / dof.
/// Returns nullopt when J is rank-deficient (after column equilibration)
/// or there are no residual degrees of freedom.
inline std::optional<Matrix> covariance(const Matrix& J, const Vector& r) {
  const Eigen::Index m = J.rows();
  const Eigen::Index n = J.cols();
  if (m <= n) return std::nullopt;
  Vector scale(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double cn = J.col(j).norm();
    if (!(cn > 0.0) || !std::isfinite(cn)) return std::nullopt;
    scale(j) = 1.0 / cn;
  }
  const Matrix Js = J * scale.asDiagonal();
  const Matrix A = Js.transpose() * Js;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const Vector ev = eig.eigenvalues();
  if (!(ev.minCoeff() > kSingularRcond * ev.maxCoeff())) return std::nullopt;
  const Matrix inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                     eig.eigenvectors().transpose();
  const double s2 = r.squaredNorm() / static_cast<double>(m - n);
  return s2 * (scale.asDiagonal() * inv * scale.asDiagonal());
}

}  // namespace resq::lsq
