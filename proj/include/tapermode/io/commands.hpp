#pragma once

// Subcommand bodies. Each takes a parsed RunConfig and writes its artifact
// to a stream (or a directory for the pipeline); errors propagate as the
// library's exception categories.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tapermode/analysis.hpp"
#include "tapermode/dynamics.hpp"
#include "tapermode/equilibrium.hpp"
#include "tapermode/io/csv.hpp"
#include "tapermode/io/run_config.hpp"
#include "tapermode/normal_modes.hpp"
#include "tapermode/pipeline.hpp"
#include "tapermode/sweep.hpp"

namespace tapermode::io {

struct CommandOptions {
  int threads = 1;
  bool verbose = false;
  std::ostream* log = nullptr;  // verbose messages, if set
};

namespace detail {

inline void log(const CommandOptions& o, const std::string& msg) {
  if (o.verbose && o.log) *o.log << msg << '\n';
}

inline std::vector<std::string> component_headers(std::size_t n) {
  std::vector<std::string> h;
  for (std::size_t i = 1; i <= n; ++i) h.push_back("a_" + std::to_string(i));
  return h;
}

inline std::string hz(double omega) { return format_number(angular_to_hz(omega)); }

inline std::vector<double> drive_grid(const RunConfig& c, const ModeSolution& modes) {
  const double lo = c.omega_d_min_hz ? hz_to_angular(*c.omega_d_min_hz) : 0.9 * modes.frequencies.minCoeff();
  const double hi = c.omega_d_max_hz ? hz_to_angular(*c.omega_d_max_hz) : 1.1 * modes.frequencies.maxCoeff();
  if (!(hi > lo) || c.scan_points < 2) throw ConfigError("drive scan needs omega_d_max > omega_d_min and >= 2 points");
  return linspace(lo, hi, c.scan_points);
}

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace detail

inline void cmd_equilibrium(const RunConfig& c, std::ostream& out, const CommandOptions& = {}) {
  const EquilibriumResult eq = solve_equilibrium(c.trap);
  CsvWriter w(out);
  w.row({"ion_index", "u", "z0_um"});
  for (std::size_t i = 0; i < eq.u.size(); ++i) {
    w.row({std::to_string(i), format_number(eq.u[i]), format_number(eq.z0[i] * 1e6)});
  }
}

inline void cmd_modes(const RunConfig& c, std::ostream& out, const CommandOptions& = {}) {
  const EquilibriumResult eq = solve_equilibrium(c.trap);
  std::vector<std::string> header{"direction", "mode_index", "gamma", "frequency_hz", "PR"};
  for (auto& h : detail::component_headers(eq.u.size())) header.push_back(h);
  CsvWriter w(out);
  w.row(header);
  std::vector<ModeSolution> all;
  for (Direction d : {Direction::x, Direction::y}) all.push_back(radial_modes(c.trap, eq, d));
  all.push_back(axial_modes(c.trap, eq));
  for (const ModeSolution& m : all) {
    for (Eigen::Index k = 0; k < m.frequencies.size(); ++k) {
      std::vector<std::string> row{std::string(to_string(m.direction)), std::to_string(k),
                                   format_number(m.eigenvalues(k)), detail::hz(m.frequencies(k)),
                                   format_number(m.participation_ratio(k))};
      for (Eigen::Index i = 0; i < m.eigenvectors.rows(); ++i) row.push_back(format_number(m.eigenvectors(i, k)));
      w.row(row);
    }
  }
}

inline void cmd_sweep(const RunConfig& c, std::ostream& out, const CommandOptions& o = {}) {
  const SweepResult r = run_sweep(make_sweep_spec(c, o.threads));
  for (const auto& f : r.tracking_failures) {
    detail::log(o, "warning: mode tracking overlap " + format_number(f.min_overlap) + " between " +
                       detail::hz(f.omega_z_from) + " Hz and " + detail::hz(f.omega_z_to) + " Hz");
  }
  std::vector<std::string> header{"omega_z_hz", "mode_label", "frequency_hz"};
  for (auto& h : detail::component_headers(static_cast<std::size_t>(c.trap.n_ions))) header.push_back(h);
  header.push_back("PR");
  header.push_back("linear_reference_frequency_hz");
  CsvWriter w(out);
  w.row(header);
  for (const SweepPoint& p : r.points) {
    for (const TrackedModes& t : p.modes) {
      const Eigen::Index n = t.frequencies.size();
      // Reference frequencies are descending; pair by rank of the tracked mode.
      std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
      for (Eigen::Index k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return t.frequencies(a) > t.frequencies(b); });
      std::vector<Eigen::Index> rank(static_cast<std::size_t>(n));
      for (Eigen::Index k = 0; k < n; ++k) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;

      for (Eigen::Index k = 0; k < n; ++k) {
        std::vector<std::string> row{detail::hz(p.omega_z), std::string(to_string(t.direction)) + std::to_string(k),
                                     detail::hz(t.frequencies(k))};
        for (Eigen::Index i = 0; i < n; ++i) row.push_back(format_number(t.eigenvectors(i, k)));
        row.push_back(format_number(t.participation_ratio(k)));
        row.push_back(t.linear_reference_frequencies.size() == n
                          ? detail::hz(t.linear_reference_frequencies(rank[static_cast<std::size_t>(k)]))
                          : std::string());
        w.row(row);
      }
    }
  }
}

inline Spectrum compute_spectrum(const RunConfig& c, const CommandOptions& o) {
  const EquilibriumResult eq = solve_equilibrium(c.trap);
  const ModeSolution modes = radial_modes(c.trap, eq, c.axis);
  const std::vector<double> grid = detail::drive_grid(c, modes);
  const BeamSpec beam = make_beam(c, eq);
  if (c.model == SpectrumSource::linear_response) {
    return linear_response_spectrum(c.trap, eq, beam, grid, hz_to_angular(c.gamma_hz));
  }
  DriveScan scan = make_drive_scan(c, o.threads);
  scan.omega_d_values = grid;
  return simulate_spectrum(c.trap, eq, beam, scan,
                           c.model == SpectrumSource::linearized ? DynamicsModel::linearized
                                                                 : DynamicsModel::full_nonlinear);
}

inline void write_spectrum(const Spectrum& s, std::ostream& out) {
  CsvWriter w(out);
  w.row({"omega_d_hz", "ion_index", "amplitude_um", "phase_rad"});
  for (std::size_t k = 0; k < s.omega_d.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    for (Eigen::Index i = 0; i < s.amplitude.cols(); ++i) {
      w.row({detail::hz(s.omega_d[k]), std::to_string(i), format_number(s.amplitude(row, i) * 1e6),
             format_number(s.phase(row, i))});
    }
  }
}

inline void cmd_simulate(const RunConfig& c, std::ostream& out, const CommandOptions& o = {}) {
  const Spectrum s = compute_spectrum(c, o);
  for (const auto& warning : s.warnings) detail::log(o, "warning: " + warning);
  write_spectrum(s, out);
}

// Inverse of write_spectrum. Rows may come in any order but every
// (omega_d, ion) pair must be present exactly once.
inline Spectrum read_spectrum(std::istream& in) {
  const auto rows = read_csv(in);
  if (rows.empty()) throw ConfigError("spectrum CSV is empty");
  const std::vector<std::string> expected{"omega_d_hz", "ion_index", "amplitude_um", "phase_rad"};
  if (rows.front() != expected) {
    throw ConfigError("spectrum CSV header must be omega_d_hz,ion_index,amplitude_um,phase_rad");
  }
  std::map<double, std::map<int, std::pair<double, double>>> table;
  int max_ion = -1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 4) throw ConfigError("spectrum CSV line " + std::to_string(r + 1) + ": expected 4 fields");
    double w = 0, a = 0, ph = 0;
    int ion = 0;
    try {
      w = std::stod(row[0]);
      ion = std::stoi(row[1]);
      a = std::stod(row[2]);
      ph = std::stod(row[3]);
    } catch (const std::exception&) {
      throw ConfigError("spectrum CSV line " + std::to_string(r + 1) + ": non-numeric field");
    }
    if (ion < 0) throw ConfigError("spectrum CSV line " + std::to_string(r + 1) + ": negative ion_index");
    if (!table[w].emplace(ion, std::make_pair(a, ph)).second) {
      throw ConfigError("spectrum CSV line " + std::to_string(r + 1) + ": duplicate (omega_d, ion) pair");
    }
    max_ion = std::max(max_ion, ion);
  }
  if (table.empty()) throw ConfigError("spectrum CSV has no data rows");
  const auto n_ions = static_cast<Eigen::Index>(max_ion + 1);
  Spectrum s;
  s.amplitude.resize(static_cast<Eigen::Index>(table.size()), n_ions);
  s.phase.resize(static_cast<Eigen::Index>(table.size()), n_ions);
  Eigen::Index k = 0;
  for (const auto& [w, ions] : table) {
    if (static_cast<Eigen::Index>(ions.size()) != n_ions) {
      throw ConfigError("spectrum CSV: omega_d = " + format_number(w) + " Hz is missing ions");
    }
    s.omega_d.push_back(hz_to_angular(w));
    for (const auto& [ion, ap] : ions) {
      s.amplitude(k, ion) = ap.first * 1e-6;
      s.phase(k, ion) = ap.second;
    }
    ++k;
  }
  return s;
}

inline nlohmann::json fit_spectrum_json(const Spectrum& s, int n_peaks) {
  using nlohmann::json;
  const Eigen::VectorXd sum = s.summed_amplitude();
  const std::vector<double> y(sum.data(), sum.data() + sum.size());
  const LorentzianModel model = fit_sum_spectrum(s.omega_d, y, n_peaks);
  std::vector<double> centers, widths;
  for (const auto& p : model.peaks) {
    centers.push_back(p.center);
    widths.push_back(p.half_width);
  }
  const FixedCenterFit heights = fit_fixed_center_amplitudes(s.omega_d, s.amplitude, centers, widths);
  const Eigen::MatrixXd phases = phases_at_centers(s, centers);
  const EigenvectorEstimate est = reconstruct_eigenvectors(heights.height, phases, centers, heights.height_error);

  json out;
  json peaks = json::array();
  for (std::size_t k = 0; k < model.peaks.size(); ++k) {
    const auto& p = model.peaks[k];
    const auto& e = model.errors[k];
    peaks.push_back({{"mode_index", k},
                     {"center_hz", angular_to_hz(p.center)},
                     {"center_error_hz", angular_to_hz(e.center)},
                     {"half_width_hz", angular_to_hz(p.half_width)},
                     {"half_width_error_hz", angular_to_hz(e.half_width)},
                     {"height_um", p.height * 1e6},
                     {"height_error_um", e.height * 1e6}});
  }
  out["sum_fit"] = {{"peaks", peaks},
                    {"offset_um", model.offset * 1e6},
                    {"residual_norm_um", model.residual_norm * 1e6},
                    {"converged", model.converged}};
  json modes = json::array();
  for (Eigen::Index k = 0; k < est.components.cols(); ++k) {
    modes.push_back({{"mode_index", k},
                     {"center_hz", angular_to_hz(centers[static_cast<std::size_t>(k)])},
                     {"components", detail::to_json(est.components.col(k))},
                     {"standard_error", detail::to_json(est.standard_error.col(k))},
                     {"heights_um", detail::to_json(heights.height.col(k) * 1e6)},
                     {"phases_rad", detail::to_json(phases.col(k))}});
  }
  out["eigenvectors"] = modes;
  json warnings = json::array();
  for (const auto& wmsg : s.warnings) warnings.push_back(wmsg);
  for (const auto& wmsg : est.warnings) warnings.push_back(wmsg);
  out["warnings"] = warnings;
  return out;
}

inline void cmd_fit(const RunConfig& c, std::istream& input, std::ostream& out, const CommandOptions& = {}) {
  const Spectrum s = read_spectrum(input);
  const int n_peaks = c.n_peaks.value_or(static_cast<int>(s.amplitude.cols()));
  out << fit_spectrum_json(s, n_peaks).dump(2) << '\n';
}

inline void write_pipeline(const ReproductionReport& report, const RunConfig& c,
                           const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir / name).string());
    return f;
  };

  std::ofstream freq = open("frequencies.csv");
  CsvWriter fw(freq);
  fw.row({"omega_z_hz", "beam", "mode_index", "theory_frequency_hz", "fitted_frequency_hz",
          "fitted_half_width_hz", "frequency_error_hz"});
  std::ofstream vec = open("eigenvectors.csv");
  CsvWriter vw(vec);
  vw.row({"omega_z_hz", "mode_index", "ion_index", "theory_component", "fitted_component",
          "component_error"});
  std::ofstream spec = open("spectra.csv");
  CsvWriter sw(spec);
  sw.row({"omega_z_hz", "omega_d_hz", "summed_amplitude_um"});

  using nlohmann::json;
  json points = json::array();
  double worst_freq = 0.0, worst_component = 0.0;
  for (const PointReport& p : report.points) {
    json jp = {{"omega_z_hz", angular_to_hz(p.omega_z)}, {"ok", p.ok}};
    if (!p.ok) {
      jp["failure"] = p.failure;
      points.push_back(jp);
      continue;
    }
    jp["beam"] = std::string(to_string(p.beam));
    double point_freq = 0.0, point_component = 0.0;
    for (Eigen::Index k = 0; k < p.theory_frequency.size(); ++k) {
      const double err = std::abs(p.fitted_frequency(k) - p.theory_frequency(k));
      point_freq = std::max(point_freq, err);
      fw.row({detail::hz(p.omega_z), std::string(to_string(p.beam)), std::to_string(k),
              detail::hz(p.theory_frequency(k)), detail::hz(p.fitted_frequency(k)),
              detail::hz(p.fitted_half_width(k)), detail::hz(err)});
      point_component = std::max(point_component,
                                  component_deviation(p.fitted_components.col(k), p.theory_components.col(k)));
      for (Eigen::Index i = 0; i < p.theory_components.rows(); ++i) {
        vw.row({detail::hz(p.omega_z), std::to_string(k), std::to_string(i),
                format_number(p.theory_components(i, k)), format_number(p.fitted_components(i, k)),
                format_number(p.component_error(i, k))});
      }
    }
    for (std::size_t j = 0; j < p.omega_d.size(); ++j) {
      sw.row({detail::hz(p.omega_z), detail::hz(p.omega_d[j]),
              format_number(p.summed_amplitude(static_cast<Eigen::Index>(j)) * 1e6)});
    }
    worst_freq = std::max(worst_freq, point_freq);
    worst_component = std::max(worst_component, point_component);
    jp["max_frequency_error_hz"] = angular_to_hz(point_freq);
    jp["max_component_deviation"] = point_component;
    jp["warnings"] = p.warnings;
    points.push_back(jp);
  }

  json summary = {{"points", points},
                  {"n_points", report.points.size()},
                  {"failed_points", report.failed_points()},
                  {"max_frequency_error_hz", angular_to_hz(worst_freq)},
                  {"max_component_deviation", worst_component},
                  {"spectrum_source", std::string(to_string(c.model))},
                  {"gamma_hz", c.gamma_hz},
                  {"noise_level", c.noise_level},
                  {"noise_seed", c.noise_seed.value_or(0)}};
  std::ofstream js = open("summary.json");
  js << summary.dump(2) << '\n';
}

inline ReproductionReport cmd_pipeline(const RunConfig& c, const std::filesystem::path& dir,
                                       const CommandOptions& o = {}) {
  const ReproductionReport report = run_experiment(make_plan(c, o.threads));
  for (const auto& p : report.points) {
    if (!p.ok) detail::log(o, "point " + detail::hz(p.omega_z) + " Hz failed: " + p.failure);
  }
  write_pipeline(report, c, dir);
  return report;
}

}  // namespace tapermode::io
