#pragma once

// Synthetic reproduction of the radial-mode measurement: per axial
// confinement, drive the chain (broad beam below the crossover, focused beam
// on the middle ion at and above it), reduce the spectra, and compare the
// fitted frequencies and eigenvector components with the eigen-solution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tapermode/analysis.hpp"
#include "tapermode/dynamics.hpp"
#include "tapermode/equilibrium.hpp"
#include "tapermode/errors.hpp"
#include "tapermode/normal_modes.hpp"
#include "tapermode/parallel.hpp"
#include "tapermode/sweep.hpp"
#include "tapermode/trap_model.hpp"

namespace tapermode {

enum class SpectrumSource { linear_response, linearized, full_nonlinear };

inline std::string_view to_string(SpectrumSource s) {
  switch (s) {
    case SpectrumSource::linear_response: return "linear_response";
    case SpectrumSource::linearized: return "linearized";
    case SpectrumSource::full_nonlinear: return "full_nonlinear";
  }
  return "?";
}

struct ExperimentPlan {
  SweepSpec sweep;
  double beam_crossover_omega_z = hz_to_angular(135e3);
  double focused_waist = 17.0e-6;  // m
  double force_amplitude = 1e-20;  // N
  Direction axis = Direction::x;
  DriveScan drive;                 // omega_d_values ignored; set per point
  int scan_points = 1500;
  double window_low = 0.9;         // scan [low * min Omega, high * max Omega]
  double window_high = 1.1;
  SpectrumSource source = SpectrumSource::linear_response;
  // Extra damping factor applied to focused-beam points (imaging-beam
  // systematic); 1 leaves it off.
  double focused_damping_factor = 1.0;
  // Multiplicative Gaussian noise on amplitudes, relative; 0 disables.
  double noise_level = 0.0;
  std::uint64_t noise_seed = 0;
  FitOptions fit{};

  void validate() const {
    detail::validate_sweep(sweep);
    if (!(beam_crossover_omega_z >= sweep.omega_z_values.front() &&
          beam_crossover_omega_z <= sweep.omega_z_values.back()) &&
        sweep.omega_z_values.size() > 1) {
      throw ConfigError("beam crossover must lie within the sweep range");
    }
    if (scan_points < 16) throw ConfigError("scan_points must be >= 16");
    if (!(window_low > 0.0 && window_high > window_low)) throw ConfigError("invalid scan window");
    if (!(noise_level >= 0.0)) throw ConfigError("noise level must be >= 0");
    if (!(focused_damping_factor > 0.0)) throw ConfigError("focused damping factor must be positive");
  }
};

struct PointReport {
  double omega_z = 0.0;
  BeamKind beam = BeamKind::broad;
  bool ok = false;
  std::string failure;
  Eigen::VectorXd theory_frequency;   // rad/s, descending
  Eigen::VectorXd fitted_frequency;   // rad/s, descending
  Eigen::VectorXd fitted_half_width;  // rad/s
  Eigen::MatrixXd theory_components;  // (ion, mode)
  Eigen::MatrixXd fitted_components;  // (ion, mode)
  Eigen::MatrixXd component_error;    // (ion, mode)
  double sum_fit_residual = 0.0;
  std::vector<std::string> warnings;
  // Scan grid and ion-summed amplitude (for plotting the raw spectra).
  std::vector<double> omega_d;
  Eigen::VectorXd summed_amplitude;
};

struct ReproductionReport {
  std::vector<PointReport> points;
  int failed_points() const {
    return static_cast<int>(std::count_if(points.begin(), points.end(), [](const auto& p) { return !p.ok; }));
  }
};

// Sign of `fitted` chosen to best match `theory` (a global sign is physically
// arbitrary), returning the max absolute component difference.
inline double component_deviation(const Eigen::VectorXd& fitted, const Eigen::VectorXd& theory) {
  return std::min((fitted - theory).cwiseAbs().maxCoeff(), (fitted + theory).cwiseAbs().maxCoeff());
}

namespace detail {

inline Spectrum synthesize(const ExperimentPlan& plan, const TrapConfig& config,
                           const EquilibriumResult& eq, const BeamSpec& beam,
                           const std::vector<double>& omega_d, double damping) {
  if (plan.source == SpectrumSource::linear_response) {
    return linear_response_spectrum(config, eq, beam, omega_d, damping);
  }
  DriveScan scan = plan.drive;
  scan.omega_d_values = omega_d;
  scan.damping_rate = damping;
  scan.threads = 1;
  return simulate_spectrum(config, eq, beam, scan,
                           plan.source == SpectrumSource::linearized ? DynamicsModel::linearized
                                                                     : DynamicsModel::full_nonlinear);
}

inline void add_noise(Spectrum& s, double level, std::uint64_t seed) {
  if (level <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < s.amplitude.rows(); ++i)
    for (Eigen::Index j = 0; j < s.amplitude.cols(); ++j)
      s.amplitude(i, j) = std::max(0.0, s.amplitude(i, j) * (1.0 + level * normal(rng)));
}

inline PointReport run_point(const ExperimentPlan& plan, std::size_t index) {
  PointReport rep;
  rep.omega_z = plan.sweep.omega_z_values[index];
  TrapConfig config = plan.sweep.base_config;
  config.omega_z = rep.omega_z;

  const EquilibriumResult eq = solve_equilibrium(config);
  const ModeSolution theory = radial_modes(config, eq, plan.axis);
  rep.theory_frequency = theory.frequencies;
  rep.theory_components = theory.eigenvectors;

  const bool focused = rep.omega_z >= plan.beam_crossover_omega_z;
  rep.beam = focused ? BeamKind::focused : BeamKind::broad;
  const std::size_t middle = eq.z0.size() / 2;
  const BeamSpec beam = focused ? BeamSpec::focused(plan.focused_waist, eq.z0[middle],
                                                    plan.force_amplitude, plan.axis)
                                : BeamSpec::broad(plan.force_amplitude, plan.axis);
  const double damping = plan.drive.damping_rate * (focused ? plan.focused_damping_factor : 1.0);

  const std::vector<double> omega_d =
      linspace(plan.window_low * theory.frequencies.minCoeff(),
               plan.window_high * theory.frequencies.maxCoeff(), plan.scan_points);
  Spectrum spectrum = synthesize(plan, config, eq, beam, omega_d, damping);
  add_noise(spectrum, plan.noise_level, plan.noise_seed + index);
  rep.warnings = spectrum.warnings;
  rep.omega_d = omega_d;
  rep.summed_amplitude = spectrum.summed_amplitude();

  const int n_modes = static_cast<int>(eq.z0.size());
  const std::vector<double> summed(rep.summed_amplitude.data(),
                                   rep.summed_amplitude.data() + rep.summed_amplitude.size());
  const LorentzianModel model = fit_sum_spectrum(omega_d, summed, n_modes, plan.fit);
  rep.sum_fit_residual = model.residual_norm;

  std::vector<double> centers, widths;
  for (const auto& p : model.peaks) {
    centers.push_back(p.center);
    widths.push_back(p.half_width);
  }
  rep.fitted_frequency = Eigen::Map<const Eigen::VectorXd>(centers.data(), n_modes);
  rep.fitted_half_width = Eigen::Map<const Eigen::VectorXd>(widths.data(), n_modes);

  const FixedCenterFit heights =
      fit_fixed_center_amplitudes(omega_d, spectrum.amplitude, centers, widths, plan.fit);
  const Eigen::MatrixXd phases = phases_at_centers(spectrum, centers);
  const EigenvectorEstimate est =
      reconstruct_eigenvectors(heights.height, phases, centers, heights.height_error);
  rep.fitted_components = est.components;
  rep.component_error = est.standard_error;
  rep.warnings.insert(rep.warnings.end(), est.warnings.begin(), est.warnings.end());
  rep.ok = true;
  return rep;
}

}  // namespace detail

inline ReproductionReport run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  const std::size_t count = plan.sweep.omega_z_values.size();
  ReproductionReport report;
  report.points.resize(count);
  parallel_for(count, plan.sweep.threads, [&](std::size_t k) {
    try {
      report.points[k] = detail::run_point(plan, k);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      PointReport failed;
      failed.omega_z = plan.sweep.omega_z_values[k];
      failed.failure = e.what();
      report.points[k] = std::move(failed);
    }
  });
  if (2 * report.failed_points() > static_cast<int>(count)) {
    throw FitError("more than half of the sweep points failed (" +
                   std::to_string(report.failed_points()) + " of " + std::to_string(count) + ")");
  }
  return report;
}

struct AxialComOptions {
  double damping_rate = kTwoPi * 1e3;
  double force_amplitude = 1e-20;
  int scan_points = 401;
  double window = 0.05;  // scan wz (1 +- window)
  SpectrumSource source = SpectrumSource::linear_response;
  int settle_cycles = 400;
  int measure_cycles = 40;
  int steps_per_period = 400;  // radial modes sit ~10x above wz
  int threads = 1;
};

struct AxialComCheck {
  double fitted_center = 0.0;  // rad/s
  double fitted_half_width = 0.0;
  double nominal = 0.0;        // omega_z
};

// Uniform axial drive around wz and a single-Lorentzian fit; the fitted
// center must sit on the axial COM frequency wz.
inline AxialComCheck axial_com_check(const TrapConfig& config, const AxialComOptions& options = {}) {
  const EquilibriumResult eq = solve_equilibrium(config);
  const BeamSpec beam = BeamSpec::broad(options.force_amplitude, Direction::z);
  const std::vector<double> omega_d =
      linspace((1.0 - options.window) * config.omega_z, (1.0 + options.window) * config.omega_z,
               options.scan_points);
  Spectrum s;
  if (options.source == SpectrumSource::linear_response) {
    s = linear_response_spectrum(config, eq, beam, omega_d, options.damping_rate);
  } else {
    DriveScan scan;
    scan.omega_d_values = omega_d;
    scan.damping_rate = options.damping_rate;
    scan.settle_cycles = options.settle_cycles;
    scan.measure_cycles = options.measure_cycles;
    scan.steps_per_period = options.steps_per_period;
    scan.threads = options.threads;
    s = simulate_spectrum(config, eq, beam, scan,
                          options.source == SpectrumSource::linearized ? DynamicsModel::linearized
                                                                       : DynamicsModel::full_nonlinear);
  }
  const Eigen::VectorXd summed = s.summed_amplitude();
  const std::vector<double> y(summed.data(), summed.data() + summed.size());
  const LorentzianModel model = fit_sum_spectrum(omega_d, y, 1);
  return {model.peaks.front().center, model.peaks.front().half_width, config.omega_z};
}

}  // namespace tapermode
