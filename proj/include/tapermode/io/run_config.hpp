#pragma once

// JSON run configuration. Frequencies in the file are ordinary Hz and are
// converted to rad/s here; lengths use the unit in the key name. Unknown
// keys are rejected.

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "tapermode/dynamics.hpp"
#include "tapermode/errors.hpp"
#include "tapermode/pipeline.hpp"
#include "tapermode/sweep.hpp"
#include "tapermode/trap_model.hpp"

namespace tapermode::io {

struct RunConfig {
  TrapConfig trap;

  double sweep_min_hz = 47e3;
  double sweep_max_hz = 205e3;
  int sweep_points = kDefaultSweepPoints;
  bool linear_reference = true;
  std::vector<Direction> directions{Direction::x};

  double gamma_hz = 1e3;  // Gamma = 2 pi gamma_hz
  double force_amplitude_n = 1e-20;
  int settle_cycles = 30;
  int measure_cycles = 20;
  int steps_per_period = 40;
  int scan_points = 1500;
  SpectrumSource model = SpectrumSource::linear_response;
  std::optional<double> omega_d_min_hz, omega_d_max_hz;

  BeamKind beam_kind = BeamKind::broad;
  double waist_um = 17.0;
  std::optional<int> center_ion_index;
  std::optional<double> center_z_um;

  std::optional<int> n_peaks;
  std::optional<std::uint64_t> noise_seed;
  double noise_level = 0.0;

  double crossover_hz = 135e3;
  double focused_damping_factor = 1.0;
  Direction axis = Direction::x;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& section,
                           const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <class T>
void read(const json& obj, const std::string& section, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

inline Direction parse_direction(const std::string& s, const std::string& where) {
  if (s == "x") return Direction::x;
  if (s == "y") return Direction::y;
  throw ConfigError("config key '" + where + "' must be x or y (got '" + s + "')");
}

inline std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  using detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON at " + detail::line_context(text, e.byte) + ": " + e.what());
  }
  detail::reject_unknown(root, "", {"trap", "sweep", "drive", "beam", "analysis", "pipeline"});

  RunConfig c;
  if (root.contains("trap")) {
    const json& t = root["trap"];
    detail::reject_unknown(t, "trap",
                           {"n_ions", "ion_mass_amu", "charge_multiple", "omega_x0_hz",
                            "omega_y0_hz", "omega_z_hz", "funnel_length_mm"});
    double mass_amu = kCalcium40MassAmu;
    double wx = 1.057e6, wz = 100e3;
    detail::read(t, "trap", "n_ions", c.trap.n_ions);
    detail::read(t, "trap", "ion_mass_amu", mass_amu);
    detail::read(t, "trap", "charge_multiple", c.trap.charge_multiple);
    detail::read(t, "trap", "omega_x0_hz", wx);
    double wy = wx;
    detail::read(t, "trap", "omega_y0_hz", wy);
    detail::read(t, "trap", "omega_z_hz", wz);
    c.trap.ion_mass = mass_amu * PhysicalConstants::atomic_mass_unit;
    c.trap.omega_x0 = hz_to_angular(wx);
    c.trap.omega_y0 = hz_to_angular(wy);
    c.trap.omega_z = hz_to_angular(wz);
    if (t.contains("funnel_length_mm")) {
      const json& l = t["funnel_length_mm"];
      if (l.is_null()) {
        c.trap.funnel_length = FunnelLength::infinite();
      } else if (l.is_number()) {
        c.trap.funnel_length = FunnelLength::meters(l.get<double>() * 1e-3);
      } else {
        throw ConfigError("config key 'trap.funnel_length_mm' must be a number or null");
      }
    }
  }
  if (root.contains("sweep")) {
    const json& s = root["sweep"];
    detail::reject_unknown(s, "sweep", {"omega_z_min_hz", "omega_z_max_hz", "points",
                                        "linear_reference", "directions"});
    detail::read(s, "sweep", "omega_z_min_hz", c.sweep_min_hz);
    detail::read(s, "sweep", "omega_z_max_hz", c.sweep_max_hz);
    detail::read(s, "sweep", "points", c.sweep_points);
    detail::read(s, "sweep", "linear_reference", c.linear_reference);
    if (s.contains("directions")) {
      std::vector<std::string> dirs;
      detail::read(s, "sweep", "directions", dirs);
      c.directions.clear();
      for (const auto& d : dirs) c.directions.push_back(detail::parse_direction(d, "sweep.directions"));
    }
  }
  if (root.contains("drive")) {
    const json& d = root["drive"];
    detail::reject_unknown(d, "drive", {"gamma_hz", "force_amplitude_n", "settle_cycles",
                                        "measure_cycles", "steps_per_period", "scan_points",
                                        "model", "omega_d_min_hz", "omega_d_max_hz"});
    detail::read(d, "drive", "gamma_hz", c.gamma_hz);
    detail::read(d, "drive", "force_amplitude_n", c.force_amplitude_n);
    detail::read(d, "drive", "settle_cycles", c.settle_cycles);
    detail::read(d, "drive", "measure_cycles", c.measure_cycles);
    detail::read(d, "drive", "steps_per_period", c.steps_per_period);
    detail::read(d, "drive", "scan_points", c.scan_points);
    if (d.contains("model")) {
      std::string m;
      detail::read(d, "drive", "model", m);
      if (m == "linear_response") c.model = SpectrumSource::linear_response;
      else if (m == "linearized") c.model = SpectrumSource::linearized;
      else if (m == "full_nonlinear") c.model = SpectrumSource::full_nonlinear;
      else throw ConfigError("config key 'drive.model' must be linear_response, linearized or full_nonlinear");
    }
    if (d.contains("omega_d_min_hz")) c.omega_d_min_hz = d["omega_d_min_hz"].get<double>();
    if (d.contains("omega_d_max_hz")) c.omega_d_max_hz = d["omega_d_max_hz"].get<double>();
  }
  if (root.contains("beam")) {
    const json& b = root["beam"];
    detail::reject_unknown(b, "beam", {"kind", "waist_um", "center_ion_index", "center_z_um"});
    if (b.contains("kind")) {
      std::string k;
      detail::read(b, "beam", "kind", k);
      if (k == "broad") c.beam_kind = BeamKind::broad;
      else if (k == "focused") c.beam_kind = BeamKind::focused;
      else throw ConfigError("config key 'beam.kind' must be broad or focused");
    }
    detail::read(b, "beam", "waist_um", c.waist_um);
    if (b.contains("center_ion_index")) {
      int idx = 0;
      detail::read(b, "beam", "center_ion_index", idx);
      c.center_ion_index = idx;
    }
    if (b.contains("center_z_um")) {
      double z = 0.0;
      detail::read(b, "beam", "center_z_um", z);
      c.center_z_um = z;
    }
    if (c.center_ion_index && c.center_z_um) {
      throw ConfigError("beam: give center_ion_index or center_z_um, not both");
    }
  }
  if (root.contains("analysis")) {
    const json& a = root["analysis"];
    detail::reject_unknown(a, "analysis", {"n_peaks", "noise_seed", "noise_level"});
    if (a.contains("n_peaks")) {
      int n = 0;
      detail::read(a, "analysis", "n_peaks", n);
      c.n_peaks = n;
    }
    if (a.contains("noise_seed")) {
      std::uint64_t s = 0;
      detail::read(a, "analysis", "noise_seed", s);
      c.noise_seed = s;
    }
    detail::read(a, "analysis", "noise_level", c.noise_level);
  }
  if (root.contains("pipeline")) {
    const json& p = root["pipeline"];
    detail::reject_unknown(p, "pipeline", {"beam_crossover_hz", "focused_damping_factor", "axis"});
    detail::read(p, "pipeline", "beam_crossover_hz", c.crossover_hz);
    detail::read(p, "pipeline", "focused_damping_factor", c.focused_damping_factor);
    if (p.contains("axis")) {
      std::string a;
      detail::read(p, "pipeline", "axis", a);
      c.axis = detail::parse_direction(a, "pipeline.axis");
    }
  }

  c.trap.validate();
  if (c.sweep_points < 1) throw ConfigError("sweep.points must be >= 1");
  if (!(c.sweep_max_hz >= c.sweep_min_hz)) throw ConfigError("sweep.omega_z_max_hz < omega_z_min_hz");
  if (!(c.gamma_hz >= 0.0)) throw ConfigError("drive.gamma_hz must be >= 0");
  return c;
}

inline SweepSpec make_sweep_spec(const RunConfig& c, int threads) {
  SweepSpec spec;
  spec.base_config = c.trap;
  spec.omega_z_values = linspace(hz_to_angular(c.sweep_min_hz), hz_to_angular(c.sweep_max_hz),
                                 c.sweep_points);
  spec.include_linear_reference = c.linear_reference;
  spec.directions = c.directions;
  spec.threads = threads;
  return spec;
}

inline DriveScan make_drive_scan(const RunConfig& c, int threads) {
  DriveScan scan;
  scan.damping_rate = hz_to_angular(c.gamma_hz);
  scan.settle_cycles = c.settle_cycles;
  scan.measure_cycles = c.measure_cycles;
  scan.steps_per_period = c.steps_per_period;
  scan.threads = threads;
  return scan;
}

inline BeamSpec make_beam(const RunConfig& c, const EquilibriumResult& eq) {
  if (c.beam_kind == BeamKind::broad) return BeamSpec::broad(c.force_amplitude_n, c.axis);
  double center = 0.0;
  if (c.center_z_um) {
    center = *c.center_z_um * 1e-6;
  } else {
    const int idx = c.center_ion_index.value_or(static_cast<int>(eq.z0.size()) / 2);
    if (idx < 0 || idx >= static_cast<int>(eq.z0.size())) {
      throw ConfigError("beam.center_ion_index out of range");
    }
    center = eq.z0[static_cast<std::size_t>(idx)];
  }
  return BeamSpec::focused(c.waist_um * 1e-6, center, c.force_amplitude_n, c.axis);
}

inline ExperimentPlan make_plan(const RunConfig& c, int threads) {
  ExperimentPlan plan;
  plan.sweep = make_sweep_spec(c, threads);
  plan.sweep.include_linear_reference = false;
  plan.beam_crossover_omega_z = hz_to_angular(c.crossover_hz);
  plan.focused_waist = c.waist_um * 1e-6;
  plan.force_amplitude = c.force_amplitude_n;
  plan.axis = c.axis;
  plan.drive = make_drive_scan(c, 1);
  plan.scan_points = c.scan_points;
  plan.source = c.model;
  plan.focused_damping_factor = c.focused_damping_factor;
  plan.noise_level = c.noise_level;
  plan.noise_seed = c.noise_seed.value_or(0);
  return plan;
}

}  // namespace tapermode::io
