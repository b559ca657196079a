#pragma once

// Levenberg-Marquardt for small bounded least-squares problems.
// Bounds are enforced by projecting every trial point onto the box.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace tapermode {

struct LevMarOptions {
  int max_iterations = 500;
  double ftol = 1e-14;  // relative cost reduction
  double xtol = 1e-12;  // relative step size, per component
  double gtol = 1e-14;  // scaled gradient
  double initial_damping = 1e-3;
};

struct LevMarResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  double cost = 0.0;  // 0.5 |r|^2
  int iterations = 0;
  bool converged = false;
  std::string reason;
  Eigen::MatrixXd covariance;  // s^2 (J^T J)^-1 with s^2 = |r|^2 / (m - n)
  Eigen::VectorXd standard_errors;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// Forward-difference Jacobian with steps relative to each parameter.
inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& fx, const Eigen::VectorXd& lower,
                                        const Eigen::VectorXd& upper) {
  Eigen::MatrixXd j(fx.size(), x.size());
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x;
    double h = eps * std::max(std::abs(x(k)), 1e-3 * (std::isfinite(upper(k) - lower(k)) ? upper(k) - lower(k) : 1.0));
    if (h == 0.0) h = eps;
    if (xp(k) + h > upper(k)) h = -h;
    xp(k) += h;
    j.col(k) = (f(xp) - fx) / h;
  }
  return j;
}

inline LevMarResult levenberg_marquardt(const ResidualFn& residual, const JacobianFn& jacobian,
                                        Eigen::VectorXd x, const Eigen::VectorXd& lower,
                                        const Eigen::VectorXd& upper,
                                        const LevMarOptions& options = {}) {
  auto project = [&](Eigen::VectorXd& p) { p = p.cwiseMax(lower).cwiseMin(upper); };
  project(x);

  LevMarResult out;
  Eigen::VectorXd r = residual(x);
  double cost = 0.5 * r.squaredNorm();
  double mu = options.initial_damping;
  double nu = 2.0;
  Eigen::MatrixXd j = jacobian(x);

  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    const Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-300);
    if ((g.cwiseAbs().array() / diag.cwiseSqrt().array()).maxCoeff() <=
        options.gtol * std::max(std::sqrt(2.0 * cost), 1e-300)) {
      out.converged = true;
      out.reason = "gtol";
      break;
    }
    if (cost == 0.0) {
      out.converged = true;
      out.reason = "zero residual";
      break;
    }

    bool improved = false;
    bool small_step = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += mu * diag;
      Eigen::VectorXd trial = x + a.ldlt().solve(-g);
      project(trial);
      const Eigen::VectorXd step = trial - x;
      if (((step.array().abs()) <= options.xtol * (x.array().abs() + options.xtol)).all()) {
        small_step = true;
        break;
      }
      const Eigen::VectorXd rt = residual(trial);
      const double ct = 0.5 * rt.squaredNorm();
      if (std::isfinite(ct) && ct < cost) {
        const double predicted = -(g.dot(step) + 0.5 * step.dot(jtj * step));
        const double rho = predicted > 0.0 ? (cost - ct) / predicted : 1.0;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        const double rel = (cost - ct) / cost;
        x = trial;
        r = rt;
        cost = ct;
        j = jacobian(x);
        improved = true;
        if (rel <= options.ftol) {
          out.converged = true;
          out.reason = "ftol";
        }
        break;
      }
      mu *= nu;
      nu *= 2.0;
    }
    if (out.converged) break;
    if (small_step) {
      out.converged = true;
      out.reason = "xtol";
      break;
    }
    if (!improved) {
      // No descent possible at any damping: we sit at a (bounded) minimum.
      out.converged = true;
      out.reason = "no further descent";
      break;
    }
  }
  if (!out.converged) out.reason = "max iterations";

  out.params = x;
  out.residuals = r;
  out.cost = cost;
  const Eigen::Index m = r.size(), n = x.size();
  const double s2 = m > n ? r.squaredNorm() / static_cast<double>(m - n) : 0.0;
  const Eigen::MatrixXd jtj = j.transpose() * j;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jtj);
  out.covariance = s2 * cod.pseudoInverse();
  out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace tapermode
