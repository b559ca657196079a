#pragma once

// On-axis equilibrium of the ion chain in dimensionless units u = z / lambda.
// Restricted to the axis the taper term vanishes, so the axial energy is
//
//   U(u) = sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|
//
// for every funnel length.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tapermode/errors.hpp"
#include "tapermode/symmetric_eigen.hpp"
#include "tapermode/trap_model.hpp"

namespace tapermode {

struct EquilibriumOptions {
  double tolerance = 1e-12;  // dimensionless gradient norm
  int max_iterations = 200;
};

struct EquilibriumResult {
  std::vector<double> u;   // ascending; index 0 is the open side, N-1 the apex
  std::vector<double> z0;  // m
  double length_scale = 0.0;
  double residual_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace axial {

inline double energy(std::span<const double> u) {
  double e = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    e += 0.5 * u[i] * u[i];
    for (std::size_t j = i + 1; j < u.size(); ++j) e += 1.0 / std::abs(u[i] - u[j]);
  }
  return e;
}

inline Eigen::VectorXd gradient(std::span<const double> u) {
  const auto n = static_cast<Eigen::Index>(u.size());
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double gi = u[i];
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = u[i] - u[j];
      gi -= (d > 0 ? 1.0 : -1.0) / (d * d);
    }
    g(i) = gi;
  }
  return g;
}

// Dimensionless axial Hessian: 1 + 2 sum 1/|du|^3 on the diagonal,
// -2/|du|^3 off it.
inline Eigen::MatrixXd hessian(std::span<const double> u) {
  const auto n = static_cast<Eigen::Index>(u.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = std::abs(u[i] - u[j]);
      const double c = 2.0 / (d * d * d);
      h(i, i) += c;
      h(i, j) = -c;
    }
  }
  return h;
}

}  // namespace axial

namespace detail {

inline bool strictly_increasing(const std::vector<double>& u) {
  return std::adjacent_find(u.begin(), u.end(), std::greater_equal<>()) == u.end();
}

// Equally spaced seed (spacing 1) followed by one Gauss-Seidel pass, each ion
// moved by a single 1-D Newton step on its own force balance.
inline std::vector<double> seed_chain(int n) {
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = i - 0.5 * (n - 1);
  for (int i = 0; i < n; ++i) {
    double f = -u[i];
    double df = -1.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = u[i] - u[j];
      f += (d > 0 ? 1.0 : -1.0) / (d * d);
      df -= 2.0 / std::abs(d * d * d);
    }
    double next = u[i] - f / df;
    const double lo = i > 0 ? u[i - 1] : -1e300;
    const double hi = i + 1 < n ? u[i + 1] : 1e300;
    if (next <= lo || next >= hi) continue;
    u[i] = next;
  }
  return u;
}

}  // namespace detail

// Damped Newton on the axial force balance with a halving line search that
// rejects steps which raise the gradient norm or reorder the ions.
inline EquilibriumResult solve_equilibrium(const TrapConfig& config,
                                           const EquilibriumOptions& options = {}) {
  config.validate();
  if (!(options.tolerance > 0.0)) throw ConfigError("equilibrium tolerance must be positive");
  const ScaledQuantities scaled = effective_radial_frequencies(config);

  std::vector<double> u = detail::seed_chain(config.n_ions);
  Eigen::VectorXd g = axial::gradient(u);
  double gnorm = g.norm();
  int iter = 0;
  while (gnorm >= options.tolerance) {
    if (iter >= options.max_iterations) {
      throw NonConvergenceError("equilibrium did not converge after " +
                                std::to_string(options.max_iterations) +
                                " iterations (gradient norm " + std::to_string(gnorm) + ")");
    }
    ++iter;
    const Eigen::MatrixXd h = axial::hessian(u);
    const Eigen::VectorXd step = h.ldlt().solve(-g);

    double t = 1.0;
    bool accepted = false;
    std::vector<double> trial(u.size());
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] + t * step(i);
      if (!detail::strictly_increasing(trial)) continue;
      const Eigen::VectorXd gt = axial::gradient(trial);
      if (gt.norm() < gnorm) {
        u = trial;
        g = gt;
        gnorm = gt.norm();
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw NonConvergenceError("equilibrium line search stalled at gradient norm " +
                                std::to_string(gnorm));
    }
  }

  const Eigen::MatrixXd h = axial::hessian(u);
  const auto spectrum = symmetric_eigen(h);
  if (!(spectrum.values.minCoeff() > 0.0)) {
    throw InstabilityError("axial Hessian at the stationary point is not positive definite");
  }

  EquilibriumResult result;
  result.u = u;
  result.length_scale = scaled.length_scale;
  result.z0.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) result.z0[i] = scaled.length_scale * u[i];
  result.residual_gradient_norm = gnorm;
  result.iterations = iter;
  result.converged = true;
  return result;
}

struct StabilityReport {
  bool stable;
  double smallest_eigenvalue;
};

inline StabilityReport equilibrium_stability_check(const EquilibriumResult& result) {
  const auto spectrum = symmetric_eigen(axial::hessian(result.u));
  const double lowest = spectrum.values.minCoeff();
  return {lowest > 0.0, lowest};
}

// Ion positions on the trap axis as an N x 3 state.
inline Positions chain_positions(const EquilibriumResult& eq) {
  Positions r = Positions::Zero(static_cast<Eigen::Index>(eq.z0.size()), 3);
  for (std::size_t i = 0; i < eq.z0.size(); ++i) r(static_cast<Eigen::Index>(i), 2) = eq.z0[i];
  return r;
}

}  // namespace tapermode
