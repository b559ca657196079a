#pragma once

// Axial-confinement sweeps with mode identity carried across scan points by
// maximum eigenvector overlap.

#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tapermode/equilibrium.hpp"
#include "tapermode/errors.hpp"
#include "tapermode/mode_tracking.hpp"
#include "tapermode/normal_modes.hpp"
#include "tapermode/parallel.hpp"
#include "tapermode/trap_model.hpp"

namespace tapermode {

inline constexpr int kDefaultSweepPoints = 80;
inline constexpr double kTrackingThreshold = 0.5;

inline std::vector<double> linspace(double first, double last, int count) {
  std::vector<double> v(static_cast<std::size_t>(std::max(count, 0)));
  if (count == 1) {
    v[0] = first;
  } else {
    for (int i = 0; i < count; ++i) v[i] = first + (last - first) * i / (count - 1);
  }
  return v;
}

struct SweepSpec {
  std::vector<double> omega_z_values;  // rad/s, strictly increasing
  TrapConfig base_config;              // omega_z ignored
  bool include_linear_reference = true;
  std::vector<Direction> directions{Direction::x};
  int threads = 1;
};

// Modes of one direction at one scan point, columns in tracked-label order.
struct TrackedModes {
  Direction direction = Direction::x;
  Eigen::VectorXd frequencies;   // rad/s
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;  // column = tracked label, row = ion
  Eigen::VectorXd participation_ratio;
  std::vector<CouplingRatio> coupling;
  // Same-point linear-trap (l0 = infinity) frequencies, descending.
  Eigen::VectorXd linear_reference_frequencies;
};

struct SweepPoint {
  double omega_z = 0.0;
  std::vector<double> u;
  double length_scale = 0.0;
  std::vector<TrackedModes> modes;  // one per requested direction
};

struct TrackingFailure {
  Direction direction;
  double omega_z_from;
  double omega_z_to;
  double min_overlap;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<TrackingFailure> tracking_failures;
};

namespace detail {

inline void validate_sweep(const SweepSpec& spec) {
  if (spec.omega_z_values.empty()) throw ConfigError("sweep needs at least one omega_z value");
  for (std::size_t i = 1; i < spec.omega_z_values.size(); ++i) {
    if (!(spec.omega_z_values[i] > spec.omega_z_values[i - 1])) {
      throw ConfigError("sweep omega_z values must be strictly increasing");
    }
  }
  for (Direction d : spec.directions) {
    if (d == Direction::z) throw ConfigError("sweep directions must be radial (x or y)");
  }
}

inline std::string omega_z_context(double omega_z) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "at omega_z = 2pi x %.6g Hz: ", angular_to_hz(omega_z));
  return buf;
}

}  // namespace detail

inline SweepResult run_sweep(const SweepSpec& spec) {
  detail::validate_sweep(spec);
  const std::size_t count = spec.omega_z_values.size();

  struct Raw {
    EquilibriumResult eq;
    std::vector<ModeSolution> modes;
    std::vector<std::vector<CouplingRatio>> coupling;
    std::vector<Eigen::VectorXd> reference;
  };
  std::vector<Raw> raw(count);

  parallel_for(count, spec.threads, [&](std::size_t k) {
    TrapConfig config = spec.base_config;
    config.omega_z = spec.omega_z_values[k];
    try {
      Raw& r = raw[k];
      r.eq = solve_equilibrium(config);
      for (Direction d : spec.directions) {
        const ModeMatrix m = build_radial_matrix(config, r.eq, d);
        r.modes.push_back(solve_modes(m, mode_frequency_scale(config, d)));
        r.coupling.push_back(coupling_diagnostic(m));
        if (spec.include_linear_reference) {
          TrapConfig linear = config;
          linear.funnel_length = FunnelLength::infinite();
          r.reference.push_back(radial_modes(linear, r.eq, d).frequencies);
        } else {
          r.reference.emplace_back();
        }
      }
    } catch (const ConfigError& e) {
      throw ConfigError(detail::omega_z_context(config.omega_z) + e.what());
    } catch (const SolverError& e) {
      throw SolverError(detail::omega_z_context(config.omega_z) + e.what());
    }
  });

  SweepResult result;
  result.points.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    SweepPoint& p = result.points[k];
    p.omega_z = spec.omega_z_values[k];
    p.u = raw[k].eq.u;
    p.length_scale = raw[k].eq.length_scale;
    for (std::size_t d = 0; d < spec.directions.size(); ++d) {
      const ModeSolution& sol = raw[k].modes[d];
      TrackedModes t;
      t.direction = sol.direction;
      t.coupling = raw[k].coupling[d];
      t.linear_reference_frequencies = raw[k].reference[d];
      if (k == 0) {
        t.frequencies = sol.frequencies;
        t.eigenvalues = sol.eigenvalues;
        t.eigenvectors = sol.eigenvectors;
        t.participation_ratio = sol.participation_ratio;
      } else {
        const TrackedModes& prev = result.points[k - 1].modes[d];
        const ModeAssignment a = mode_overlap_assignment(prev.eigenvectors, sol.eigenvectors);
        const Eigen::Index n = sol.eigenvectors.cols();
        t.frequencies.resize(n);
        t.eigenvalues.resize(n);
        t.eigenvectors.resize(n, n);
        t.participation_ratio.resize(n);
        for (Eigen::Index label = 0; label < n; ++label) {
          const int src = a.permutation[label];
          t.frequencies(label) = sol.frequencies(src);
          t.eigenvalues(label) = sol.eigenvalues(src);
          t.eigenvectors.col(label) = a.signs[label] * sol.eigenvectors.col(src);
          t.participation_ratio(label) = sol.participation_ratio(src);
        }
        if (a.min_overlap <= kTrackingThreshold) {
          result.tracking_failures.push_back(
              {sol.direction, spec.omega_z_values[k - 1], spec.omega_z_values[k], a.min_overlap});
        }
      }
      p.modes.push_back(std::move(t));
    }
  }
  return result;
}

}  // namespace tapermode
