#pragma once

// Classical driven-damped chain dynamics. Each ion feels
//
//   m r_i'' = -grad_i V - m Gamma r_i' + w_i F0 sin(wd t) e_axis
//
// where w_i is the beam's illumination weight at the ion. Steady-state
// amplitude A and phase phi are defined by x_i(t) = A sin(wd t + phi), so
// phi = 0 means in phase with the drive force.

#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tapermode/equilibrium.hpp"
#include "tapermode/errors.hpp"
#include "tapermode/normal_modes.hpp"
#include "tapermode/parallel.hpp"
#include "tapermode/symmetric_eigen.hpp"
#include "tapermode/trap_model.hpp"

namespace tapermode {

enum class BeamKind { broad, focused };

inline std::string_view to_string(BeamKind k) { return k == BeamKind::broad ? "broad" : "focused"; }

struct BeamSpec {
  BeamKind kind = BeamKind::broad;
  double waist_radius = std::numeric_limits<double>::infinity();  // 1/e^2 intensity radius, m
  double center_z = 0.0;                                           // m
  double force_amplitude = 1e-20;                                  // N, per fully lit ion
  Direction axis = Direction::x;

  static BeamSpec broad(double force, Direction axis = Direction::x) {
    return {BeamKind::broad, std::numeric_limits<double>::infinity(), 0.0, force, axis};
  }
  static BeamSpec focused(double waist, double center_z, double force,
                          Direction axis = Direction::x) {
    return {BeamKind::focused, waist, center_z, force, axis};
  }

  void validate() const {
    if (kind == BeamKind::focused && !(waist_radius > 0.0)) {
      throw ConfigError("focused beam needs a positive waist radius");
    }
    if (!(force_amplitude >= 0.0)) throw ConfigError("force amplitude must be >= 0");
  }
};

enum class DynamicsModel { linearized, full_nonlinear };

struct DriveScan {
  std::vector<double> omega_d_values;  // rad/s
  double damping_rate = kTwoPi * 1e3;  // Gamma, 1/s
  int settle_cycles = 30;
  int measure_cycles = 20;
  int steps_per_period = 40;  // integrator step = 2 pi / (wd * steps_per_period)
  int threads = 1;

  double integrator_step(double omega_d) const { return kTwoPi / (omega_d * steps_per_period); }
};

struct Spectrum {
  std::vector<double> omega_d;  // rad/s
  Eigen::MatrixXd amplitude;    // (omega_d index, ion), m
  Eigen::MatrixXd phase;        // (omega_d index, ion), rad in (-pi, pi]
  BeamSpec beam;
  double damping_rate = 0.0;
  Direction axis = Direction::x;
  std::vector<std::string> warnings;

  Eigen::VectorXd summed_amplitude() const { return amplitude.rowwise().sum(); }
};

inline std::vector<double> beam_weights(const BeamSpec& beam, const EquilibriumResult& eq) {
  std::vector<double> w(eq.z0.size(), 1.0);
  if (beam.kind == BeamKind::focused) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = (eq.z0[i] - beam.center_z) / beam.waist_radius;
      w[i] = std::exp(-2.0 * d * d);
    }
  }
  return w;
}

namespace detail {

inline double wrap_phase(double phi) {
  const double pi = std::numbers::pi;
  phi = std::remainder(phi, 2.0 * pi);
  if (phi <= -pi) phi += 2.0 * pi;
  return phi;
}

// 3N drive direction vector scaled by the ions' weights.
inline Eigen::VectorXd drive_pattern(const std::vector<double>& weights, Direction axis) {
  const auto n = static_cast<Eigen::Index>(weights.size());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) f(3 * i + axis_index(axis)) = weights[i];
  return f;
}

// Precomputed trap force for the time-domain integrator.
class ForceField {
 public:
  explicit ForceField(const TrapConfig& config) {
    const ScaledQuantities s = effective_radial_frequencies(config);
    wx2_ = s.omega_rho_eff_x * s.omega_rho_eff_x;
    wy2_ = s.omega_rho_eff_y * s.omega_rho_eff_y;
    wz2_ = config.omega_z * config.omega_z;
    inv_l0_ = config.funnel_length.inverse();
    k_over_m_ = config.coulomb_constant() / config.ion_mass;
  }

  // Acceleration -grad V / m at absolute positions r (3N, ion-major).
  void acceleration(const Eigen::VectorXd& r, Eigen::VectorXd& a) const {
    const Eigen::Index n = r.size() / 3;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = r(3 * i), y = r(3 * i + 1), z = r(3 * i + 2);
      const double f = 1.0 + 2.0 * z * inv_l0_;
      if (!(f > 0.0)) throw DomainError("ion left the region where 1 + 2z/l0 > 0");
      a(3 * i) = -f * wx2_ * x;
      a(3 * i + 1) = -f * wy2_ * y;
      a(3 * i + 2) = -inv_l0_ * (wx2_ * x * x + wy2_ * y * y) - wz2_ * z;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double dx = r(3 * i) - r(3 * j);
        const double dy = r(3 * i + 1) - r(3 * j + 1);
        const double dz = r(3 * i + 2) - r(3 * j + 2);
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (!(d2 > 0.0)) throw CoincidentIonsError("ions collided during integration");
        const double c = k_over_m_ / (d2 * std::sqrt(d2));
        a(3 * i) += c * dx;
        a(3 * i + 1) += c * dy;
        a(3 * i + 2) += c * dz;
        a(3 * j) -= c * dx;
        a(3 * j + 1) -= c * dy;
        a(3 * j + 2) -= c * dz;
      }
    }
  }

 private:
  double wx2_, wy2_, wz2_, inv_l0_, k_over_m_;
};

inline Eigen::VectorXd flatten(const Positions& r) {
  Eigen::VectorXd v(r.size());
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (int d = 0; d < 3; ++d) v(3 * i + d) = r(i, d);
  return v;
}

// Largest normal-mode frequency of the full 3N system, rad/s.
inline double max_mode_frequency(const Eigen::MatrixXd& hessian_over_mass) {
  return std::sqrt(std::max(0.0, symmetric_eigen(hessian_over_mass).values.maxCoeff()));
}

}  // namespace detail

// Fixed-step integrator for displacements dr about the equilibrium chain:
// velocity-Verlet with the damping split over the two velocity half-steps
//
//   v += dt/2 (a - Gamma v);  dr += dt v;  v = (v + dt/2 a_new) / (1 + Gamma dt/2)
//
// The drive adds `drive * sin(wd t)` to the acceleration.
class ChainIntegrator {
 public:
  ChainIntegrator(const TrapConfig& config, const EquilibriumResult& eq, DynamicsModel model,
                  double damping_rate, double dt)
      : model_(model),
        r0_(detail::flatten(chain_positions(eq))),
        k_over_m_(potential_hessian(config, chain_positions(eq)) / config.ion_mass),
        field_(config),
        config_(config),
        gamma_(damping_rate),
        dt_(dt),
        guard_(1e3 * eq.length_scale),
        drive_(Eigen::VectorXd::Zero(r0_.size())),
        dr_(Eigen::VectorXd::Zero(r0_.size())),
        v_(Eigen::VectorXd::Zero(r0_.size())),
        acc_(r0_.size()),
        pos_(r0_.size()) {
    refresh_acceleration();
  }

  // Drive acceleration pattern (3N, m/s^2) and frequency.
  void set_drive(const Eigen::VectorXd& accel, double omega_d) {
    drive_ = accel;
    omega_d_ = omega_d;
    refresh_acceleration();
  }

  void set_state(const Eigen::VectorXd& displacement, const Eigen::VectorXd& velocity) {
    dr_ = displacement;
    v_ = velocity;
    refresh_acceleration();
  }

  void step() {
    const double half = 0.5 * dt_;
    v_ += half * (acc_ - gamma_ * v_);
    dr_ += dt_ * v_;
    t_ += dt_;
    refresh_acceleration();
    v_ = (v_ + half * acc_) / (1.0 + gamma_ * half);
    if (dr_.cwiseAbs().maxCoeff() > guard_) {
      throw InstabilityError("ion displacement exceeded 1e3 lambda (integration blew up)");
    }
  }

  double time() const { return t_; }
  const Eigen::VectorXd& displacement() const { return dr_; }
  const Eigen::VectorXd& velocity() const { return v_; }

  // Kinetic plus potential energy above the equilibrium, J.
  double energy() const {
    const double kinetic = 0.5 * config_.ion_mass * v_.squaredNorm();
    if (model_ == DynamicsModel::linearized) {
      return kinetic + 0.5 * config_.ion_mass * dr_.dot(k_over_m_ * dr_);
    }
    Positions now(r0_.size() / 3, 3), eq(r0_.size() / 3, 3);
    for (Eigen::Index i = 0; i < now.rows(); ++i)
      for (int d = 0; d < 3; ++d) {
        now(i, d) = r0_(3 * i + d) + dr_(3 * i + d);
        eq(i, d) = r0_(3 * i + d);
      }
    return kinetic + total_potential(config_, now) - total_potential(config_, eq);
  }

 private:
  void refresh_acceleration() {
    if (model_ == DynamicsModel::linearized) {
      acc_.noalias() = -k_over_m_ * dr_;
    } else {
      pos_ = r0_ + dr_;
      field_.acceleration(pos_, acc_);
    }
    if (omega_d_ != 0.0) acc_ += drive_ * std::sin(omega_d_ * t_);
  }

  DynamicsModel model_;
  Eigen::VectorXd r0_;
  Eigen::MatrixXd k_over_m_;
  detail::ForceField field_;
  TrapConfig config_;
  double gamma_, dt_, guard_;
  double omega_d_ = 0.0;
  double t_ = 0.0;
  Eigen::VectorXd drive_, dr_, v_, acc_, pos_;
};

// Time-domain spectrum: integrate from rest at equilibrium, then demodulate
// over an integer number of drive periods.
inline Spectrum simulate_spectrum(const TrapConfig& config, const EquilibriumResult& eq,
                                  const BeamSpec& beam, const DriveScan& scan,
                                  DynamicsModel model = DynamicsModel::linearized) {
  beam.validate();
  if (scan.settle_cycles < 0 || scan.measure_cycles < 1 || scan.steps_per_period < 2) {
    throw ConfigError("drive scan needs settle_cycles >= 0, measure_cycles >= 1, steps_per_period >= 2");
  }
  if (!(scan.damping_rate >= 0.0)) throw ConfigError("damping rate must be >= 0");

  const auto n = static_cast<Eigen::Index>(eq.z0.size());
  const Eigen::MatrixXd k_over_m = potential_hessian(config, chain_positions(eq)) / config.ion_mass;
  const double max_omega = detail::max_mode_frequency(k_over_m);
  const Eigen::VectorXd drive =
      detail::drive_pattern(beam_weights(beam, eq), beam.axis) * (beam.force_amplitude / config.ion_mass);
  const double gamma = scan.damping_rate;
  const int axis = axis_index(beam.axis);

  Spectrum out;
  out.omega_d = scan.omega_d_values;
  out.beam = beam;
  out.damping_rate = gamma;
  out.axis = beam.axis;
  const auto count = static_cast<Eigen::Index>(scan.omega_d_values.size());
  out.amplitude.resize(count, n);
  out.phase.resize(count, n);

  for (double wd : scan.omega_d_values) {
    if (!(wd > 0.0)) throw ConfigError("drive frequencies must be positive");
    const double dt = scan.integrator_step(wd);
    if (!(dt < kTwoPi / (20.0 * max_omega))) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "integrator step %.3g s gives fewer than 20 steps per fastest mode period", dt);
      throw ConfigError(buf);
    }
    if (gamma > 0.0 && scan.settle_cycles * kTwoPi / wd < 5.0 / gamma && out.warnings.empty()) {
      out.warnings.push_back("settle time shorter than 5/Gamma; transients may bias amplitudes");
    }
  }

  parallel_for(static_cast<std::size_t>(count), scan.threads, [&](std::size_t idx) {
    const double wd = scan.omega_d_values[idx];
    const long settle_steps = static_cast<long>(scan.settle_cycles) * scan.steps_per_period;
    const long measure_steps = static_cast<long>(scan.measure_cycles) * scan.steps_per_period;

    ChainIntegrator integrator(config, eq, model, gamma, scan.integrator_step(wd));
    integrator.set_drive(drive, wd);
    for (long step = 0; step < settle_steps; ++step) integrator.step();

    std::vector<std::complex<double>> demod(static_cast<std::size_t>(n), {0.0, 0.0});
    for (long step = 0; step < measure_steps; ++step) {
      const std::complex<double> phasor = std::polar(1.0, -wd * integrator.time());
      const Eigen::VectorXd& dr = integrator.displacement();
      for (Eigen::Index i = 0; i < n; ++i) demod[i] += dr(3 * i + axis) * phasor;
      integrator.step();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::complex<double> c = demod[i] / static_cast<double>(measure_steps);
      const std::complex<double> response = 2.0 * std::complex<double>(0.0, 1.0) * c;
      out.amplitude(static_cast<Eigen::Index>(idx), i) = std::abs(response);
      out.phase(static_cast<Eigen::Index>(idx), i) = detail::wrap_phase(std::arg(response));
    }
  });
  return out;
}

// Exact steady state of the linearized system:
//   (H/m - wd^2 + i Gamma wd) X = (F0/m) w,   A e^{i phi} = X.
inline Spectrum linear_response_spectrum(const TrapConfig& config, const EquilibriumResult& eq,
                                         const BeamSpec& beam,
                                         const std::vector<double>& omega_d_values,
                                         double damping_rate) {
  beam.validate();
  const auto n = static_cast<Eigen::Index>(eq.z0.size());
  const Eigen::MatrixXd k_over_m = potential_hessian(config, chain_positions(eq)) / config.ion_mass;
  const Eigen::VectorXcd rhs =
      (detail::drive_pattern(beam_weights(beam, eq), beam.axis) * (beam.force_amplitude / config.ion_mass))
          .cast<std::complex<double>>();
  const int axis = axis_index(beam.axis);

  Spectrum out;
  out.omega_d = omega_d_values;
  out.beam = beam;
  out.damping_rate = damping_rate;
  out.axis = beam.axis;
  const auto count = static_cast<Eigen::Index>(omega_d_values.size());
  out.amplitude.resize(count, n);
  out.phase.resize(count, n);

  const Eigen::MatrixXcd base = k_over_m.cast<std::complex<double>>();
  for (Eigen::Index k = 0; k < count; ++k) {
    const double wd = omega_d_values[static_cast<std::size_t>(k)];
    Eigen::MatrixXcd system = base;
    system.diagonal().array() += std::complex<double>(-wd * wd, damping_rate * wd);
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(system);
    if (!lu.isInvertible()) {
      throw SolverError("linear response is singular (Gamma = 0 at an eigenfrequency)");
    }
    const Eigen::VectorXcd x = lu.solve(rhs);
    if (!x.allFinite()) throw SolverError("linear response produced non-finite amplitudes");
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::complex<double> xi = x(3 * i + axis);
      out.amplitude(k, i) = std::abs(xi);
      out.phase(k, i) = detail::wrap_phase(std::arg(xi));
    }
  }
  return out;
}

}  // namespace tapermode
