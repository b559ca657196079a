#pragma once

// Trap configuration and the exact N-ion potential of a tapered Paul trap:
//
//   V = sum_i (m/2) [ (1 + 2 z_i / l0) (wx^2 x_i^2 + wy^2 y_i^2) + wz^2 z_i^2 ]
//     + k sum_{i<j} 1 / |r_i - r_j|,          k = (Z e)^2 / (4 pi eps0)
//
// Axis convention: z increases toward the trap apex, so 1 + 2z/l0 > 1 means
// stronger radial confinement at positive z. wx, wy are the effective radial
// frequencies sqrt(w_rho0^2 - wz^2 / 2).
//
// Everything here is SI with angular frequencies (rad/s).

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "tapermode/errors.hpp"

namespace tapermode {

// CODATA 2018 exact/recommended values.
struct PhysicalConstants {
  static constexpr double elementary_charge = 1.602176634e-19;       // C
  static constexpr double vacuum_permittivity = 8.8541878128e-12;    // F/m
  static constexpr double atomic_mass_unit = 1.66053906660e-27;      // kg
};

inline constexpr double kCalcium40MassAmu = 39.962590863;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double hz_to_angular(double hz) { return kTwoPi * hz; }
inline constexpr double angular_to_hz(double omega) { return omega / kTwoPi; }

// Funnel length l0, with an exact infinite value for the linear-trap limit.
class FunnelLength {
 public:
  static FunnelLength infinite() { return FunnelLength{}; }
  static FunnelLength meters(double l0) {
    if (!(l0 > 0.0) || !std::isfinite(l0)) {
      throw ConfigError("funnel_length must be positive and finite (use infinite() for a linear trap)");
    }
    return FunnelLength{l0};
  }

  bool is_infinite() const { return infinite_; }
  double value() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : length_;
  }
  // 1 / l0, exactly zero in the infinite limit.
  double inverse() const { return infinite_ ? 0.0 : 1.0 / length_; }

  friend bool operator==(const FunnelLength&, const FunnelLength&) = default;

 private:
  FunnelLength() = default;
  explicit FunnelLength(double l0) : infinite_(false), length_(l0) {}

  bool infinite_ = true;
  double length_ = 0.0;
};

struct TrapConfig {
  int n_ions = 3;
  double ion_mass = kCalcium40MassAmu * PhysicalConstants::atomic_mass_unit;  // kg
  int charge_multiple = 1;
  double omega_x0 = hz_to_angular(1.057e6);  // bare radial frequencies, rad/s
  double omega_y0 = hz_to_angular(1.057e6);
  double omega_z = hz_to_angular(100e3);
  FunnelLength funnel_length = FunnelLength::meters(1.81e-3);

  double charge() const { return charge_multiple * PhysicalConstants::elementary_charge; }

  // k = q^2 / (4 pi eps0), in J m.
  double coulomb_constant() const {
    const double q = charge();
    return q * q / (4.0 * std::numbers::pi * PhysicalConstants::vacuum_permittivity);
  }

  void validate() const {
    if (n_ions < 1) throw ConfigError("n_ions must be >= 1");
    if (!(ion_mass > 0.0)) throw ConfigError("ion_mass must be positive");
    if (charge_multiple < 1) throw ConfigError("charge_multiple must be >= 1");
    if (!(omega_z > 0.0)) throw ConfigError("omega_z must be positive");
    const double limit = omega_z * omega_z / 2.0;
    if (!(omega_x0 * omega_x0 > limit) || !(omega_y0 * omega_y0 > limit)) {
      throw ConfigError(
          "configuration invalid: radial frequency must exceed omega_z/sqrt(2) "
          "(effective radial confinement would not be real)");
    }
  }
};

struct ScaledQuantities {
  double length_scale;     // lambda, lambda^3 = k / (m wz^2)
  double beta_x;           // wz / w_rho,eff
  double beta_y;
  double omega_rho_eff_x;  // sqrt(w_rho0^2 - wz^2 / 2)
  double omega_rho_eff_y;
};

inline ScaledQuantities effective_radial_frequencies(const TrapConfig& config) {
  config.validate();
  const double wz2 = config.omega_z * config.omega_z;
  const double wx = std::sqrt(config.omega_x0 * config.omega_x0 - wz2 / 2.0);
  const double wy = std::sqrt(config.omega_y0 * config.omega_y0 - wz2 / 2.0);
  const double lambda = std::cbrt(config.coulomb_constant() / (config.ion_mass * wz2));
  return {lambda, config.omega_z / wx, config.omega_z / wy, wx, wy};
}

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct IonChainState {
  Positions positions;   // m
  Positions velocities;  // m/s
};

// 1 + 2 z / l0, throwing when it is not positive.
inline double funnel_factor(const TrapConfig& config, double z) {
  const double f = 1.0 + 2.0 * z * config.funnel_length.inverse();
  if (!(f > 0.0)) {
    throw DomainError("funnel factor 1 + 2z/l0 <= 0 at z = " + std::to_string(z) + " m");
  }
  return f;
}

namespace detail {

inline void check_state(const TrapConfig& config, const Positions& r) {
  if (r.rows() != config.n_ions) {
    throw ConfigError("state has " + std::to_string(r.rows()) + " ions, config has " +
                      std::to_string(config.n_ions));
  }
  if (!r.allFinite()) throw SolverError("non-finite ion position");
}

inline double pair_distance(const Positions& r, Eigen::Index i, Eigen::Index j) {
  const double d = (r.row(i) - r.row(j)).norm();
  if (!(d > 0.0)) {
    throw CoincidentIonsError("ions " + std::to_string(i) + " and " + std::to_string(j) +
                              " coincide");
  }
  return d;
}

}  // namespace detail

inline double total_potential(const TrapConfig& config, const Positions& r) {
  detail::check_state(config, r);
  const ScaledQuantities s = effective_radial_frequencies(config);
  const double wx2 = s.omega_rho_eff_x * s.omega_rho_eff_x;
  const double wy2 = s.omega_rho_eff_y * s.omega_rho_eff_y;
  const double wz2 = config.omega_z * config.omega_z;
  const double k = config.coulomb_constant();

  double trap = 0.0;
  double coulomb = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double x = r(i, 0), y = r(i, 1), z = r(i, 2);
    const double f = funnel_factor(config, z);
    trap += f * (wx2 * x * x + wy2 * y * y) + wz2 * z * z;
    for (Eigen::Index j = i + 1; j < r.rows(); ++j) {
      coulomb += 1.0 / detail::pair_distance(r, i, j);
    }
  }
  return 0.5 * config.ion_mass * trap + k * coulomb;
}

// dV/dr_i for every ion (the force is its negative).
inline Positions potential_gradient(const TrapConfig& config, const Positions& r) {
  detail::check_state(config, r);
  const ScaledQuantities s = effective_radial_frequencies(config);
  const double m = config.ion_mass;
  const double wx2 = s.omega_rho_eff_x * s.omega_rho_eff_x;
  const double wy2 = s.omega_rho_eff_y * s.omega_rho_eff_y;
  const double wz2 = config.omega_z * config.omega_z;
  const double inv_l0 = config.funnel_length.inverse();
  const double k = config.coulomb_constant();

  Positions g = Positions::Zero(r.rows(), 3);
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double x = r(i, 0), y = r(i, 1), z = r(i, 2);
    const double f = funnel_factor(config, z);
    g(i, 0) += m * f * wx2 * x;
    g(i, 1) += m * f * wy2 * y;
    g(i, 2) += m * inv_l0 * (wx2 * x * x + wy2 * y * y) + m * wz2 * z;
    for (Eigen::Index j = i + 1; j < r.rows(); ++j) {
      const double d = detail::pair_distance(r, i, j);
      const Eigen::RowVector3d term = -k * (r.row(i) - r.row(j)) / (d * d * d);
      g.row(i) += term;
      g.row(j) -= term;
    }
  }
  return g;
}

// Full 3N x 3N Hessian; coordinate index is 3 * ion + axis (x, y, z).
inline Eigen::MatrixXd potential_hessian(const TrapConfig& config, const Positions& r) {
  detail::check_state(config, r);
  const ScaledQuantities s = effective_radial_frequencies(config);
  const double m = config.ion_mass;
  const double wx2 = s.omega_rho_eff_x * s.omega_rho_eff_x;
  const double wy2 = s.omega_rho_eff_y * s.omega_rho_eff_y;
  const double wz2 = config.omega_z * config.omega_z;
  const double inv_l0 = config.funnel_length.inverse();
  const double k = config.coulomb_constant();
  const Eigen::Index n = r.rows();

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = r(i, 0), y = r(i, 1), z = r(i, 2);
    const double f = funnel_factor(config, z);
    const Eigen::Index a = 3 * i;
    h(a, a) += m * f * wx2;
    h(a + 1, a + 1) += m * f * wy2;
    h(a + 2, a + 2) += m * wz2;
    const double xz = 2.0 * m * inv_l0 * wx2 * x;
    const double yz = 2.0 * m * inv_l0 * wy2 * y;
    h(a, a + 2) += xz;
    h(a + 2, a) += xz;
    h(a + 1, a + 2) += yz;
    h(a + 2, a + 1) += yz;

    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = detail::pair_distance(r, i, j);
      const Eigen::Vector3d d = (r.row(i) - r.row(j)).transpose();
      const double inv3 = 1.0 / (dist * dist * dist);
      const double inv5 = inv3 / (dist * dist);
      const Eigen::Matrix3d block =
          k * (3.0 * inv5 * (d * d.transpose()) - inv3 * Eigen::Matrix3d::Identity());
      const Eigen::Index b = 3 * j;
      h.block<3, 3>(a, a) += block;
      h.block<3, 3>(b, b) += block;
      h.block<3, 3>(a, b) -= block;
      h.block<3, 3>(b, a) -= block;
    }
  }
  return h;
}

}  // namespace tapermode
