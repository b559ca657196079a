#pragma once

// Dimensionless mode matrices of an on-axis chain and their eigen-solutions.
//
// Radial (rho = x, y), with beta = wz / w_rho and taper ratio 2 lambda / l0:
//   A_ii = 1 + (2 lambda / l0) u_i - sum_{k != i} beta^2 / |u_i - u_k|^3
//   A_ij = beta^2 / |u_i - u_j|^3
// Mode frequencies are sqrt(gamma) * w_rho (radial) or sqrt(mu) * wz (axial).

#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tapermode/equilibrium.hpp"
#include "tapermode/errors.hpp"
#include "tapermode/symmetric_eigen.hpp"
#include "tapermode/trap_model.hpp"

namespace tapermode {

enum class Direction { x, y, z };

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::x: return "x";
    case Direction::y: return "y";
    case Direction::z: return "z";
  }
  return "?";
}

inline int axis_index(Direction d) { return static_cast<int>(d); }

struct ModeMatrix {
  Direction direction = Direction::x;
  Eigen::MatrixXd entries;
  double beta = 0.0;         // radial only
  double taper_ratio = 0.0;  // 2 lambda / l0, zero for a linear trap
};

struct ModeSolution {
  Direction direction = Direction::x;
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::VectorXd frequencies;   // rad/s
  Eigen::MatrixXd eigenvectors;  // column i is mode i; row j is ion j
  Eigen::VectorXd participation_ratio;
};

inline ModeMatrix build_radial_matrix(const TrapConfig& config, const EquilibriumResult& eq,
                                      Direction direction) {
  if (direction == Direction::z) throw ConfigError("build_radial_matrix needs direction x or y");
  const ScaledQuantities s = effective_radial_frequencies(config);
  const double beta = direction == Direction::x ? s.beta_x : s.beta_y;
  const double beta2 = beta * beta;
  const double taper = 2.0 * s.length_scale * config.funnel_length.inverse();
  const auto n = static_cast<Eigen::Index>(eq.u.size());

  ModeMatrix m{direction, Eigen::MatrixXd::Zero(n, n), beta, taper};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double site = 1.0 + taper * eq.u[i];
    if (!(site > 0.0)) {
      throw DomainError("funnel factor <= 0 at ion " + std::to_string(i));
    }
    m.entries(i, i) = site;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = std::abs(eq.u[i] - eq.u[j]);
      const double c = beta2 / (d * d * d);
      m.entries(i, i) -= c;
      m.entries(i, j) = c;
    }
  }
  return m;
}

inline ModeMatrix build_axial_matrix(const EquilibriumResult& eq) {
  return {Direction::z, axial::hessian(eq.u), 0.0, 0.0};
}

// omega_scale that turns eigenvalues of the direction's matrix into frequencies.
inline double mode_frequency_scale(const TrapConfig& config, Direction direction) {
  const ScaledQuantities s = effective_radial_frequencies(config);
  switch (direction) {
    case Direction::x: return s.omega_rho_eff_x;
    case Direction::y: return s.omega_rho_eff_y;
    case Direction::z: return config.omega_z;
  }
  return 0.0;
}

inline double participation_ratio(const Eigen::VectorXd& a) {
  return 1.0 / a.array().pow(4).sum();
}

// Flip v so that its largest-magnitude entry is positive; among entries tied
// in magnitude (to round-off) the lowest index decides.
inline void apply_sign_convention(Eigen::Ref<Eigen::VectorXd> v) {
  const double largest = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= largest - 1e-12) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

inline ModeSolution solve_modes(const ModeMatrix& matrix, double omega_scale) {
  const auto eig = symmetric_eigen(matrix.entries);
  const Eigen::Index n = matrix.entries.rows();
  if (n > 0 && !(eig.values(0) > 0.0)) {
    throw InstabilityError(std::string("negative eigenvalue in ") +
                           std::string(to_string(matrix.direction)) +
                           " mode matrix (radial instability: omega_z too large or funnel factor <= 0)");
  }

  ModeSolution sol;
  sol.direction = matrix.direction;
  sol.eigenvalues.resize(n);
  sol.frequencies.resize(n);
  sol.eigenvectors.resize(n, n);
  sol.participation_ratio.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = n - 1 - k;  // descending
    sol.eigenvalues(k) = eig.values(src);
    sol.frequencies(k) = std::sqrt(eig.values(src)) * omega_scale;
    sol.eigenvectors.col(k) = eig.vectors.col(src);
    apply_sign_convention(sol.eigenvectors.col(k));
    sol.participation_ratio(k) = participation_ratio(sol.eigenvectors.col(k));
  }
  return sol;
}

inline ModeSolution radial_modes(const TrapConfig& config, const EquilibriumResult& eq,
                                 Direction direction) {
  return solve_modes(build_radial_matrix(config, eq, direction),
                     mode_frequency_scale(config, direction));
}

inline ModeSolution axial_modes(const TrapConfig& config, const EquilibriumResult& eq) {
  return solve_modes(build_axial_matrix(eq), config.omega_z);
}

// |A_ij| / |A_ii - A_jj| for every pair; infinite when the sites are degenerate.
struct CouplingRatio {
  int i;
  int j;
  double ratio;
  bool collective() const { return ratio >= 1.0; }
};

inline std::vector<CouplingRatio> coupling_diagnostic(const ModeMatrix& matrix) {
  const Eigen::MatrixXd& a = matrix.entries;
  std::vector<CouplingRatio> out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
      const double detuning = std::abs(a(i, i) - a(j, j));
      const double ratio = detuning == 0.0 ? std::numeric_limits<double>::infinity()
                                           : std::abs(a(i, j)) / detuning;
      out.push_back({static_cast<int>(i), static_cast<int>(j), ratio});
    }
  }
  return out;
}

inline std::vector<CouplingRatio> nearest_neighbor_coupling(const ModeMatrix& matrix) {
  std::vector<CouplingRatio> out;
  for (const auto& c : coupling_diagnostic(matrix)) {
    if (c.j == c.i + 1) out.push_back(c);
  }
  return out;
}

}  // namespace tapermode
