#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "tapermode/dynamics.hpp"
#include "tapermode/sweep.hpp"

using namespace tapermode;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TrapConfig at(double omega_z_hz) {
  TrapConfig c;
  c.omega_z = hz_to_angular(omega_z_hz);
  return c;
}

std::complex<double> oscillator(double f_over_m, double omega0, double gamma, double wd) {
  return f_over_m / std::complex<double>(omega0 * omega0 - wd * wd, gamma * wd);
}

// Modal coordinate <a, X> of the complex x-response at scan index k.
std::complex<double> modal_response(const Spectrum& s, Eigen::Index k, const Eigen::VectorXd& a) {
  std::complex<double> q = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) q += a(i) * std::polar(s.amplitude(k, i), s.phase(k, i));
  return q;
}

}  // namespace

TEST_CASE("beam weights", "[dynamics]") {
  const TrapConfig c = at(205e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  for (double w : beam_weights(BeamSpec::broad(1e-20), eq)) CHECK(w == 1.0);

  const auto narrow = beam_weights(BeamSpec::focused(1e-6, eq.z0[1], 1e-20), eq);
  CHECK(narrow[1] == 1.0);
  CHECK(narrow[0] < 1e-100);
  CHECK(narrow[2] < 1e-100);

  const double spacing = eq.z0[2] - eq.z0[1];
  CHECK_THAT(spacing, WithinRel(std::cbrt(1.25) * 1.2796680695547314e-05, 1e-9));
  const auto wide = beam_weights(BeamSpec::focused(17e-6, eq.z0[1], 1e-20), eq);
  CHECK_THAT(wide[0], WithinRel(std::exp(-2.0 * std::pow(spacing / 17e-6, 2)), 1e-12));
  CHECK_THAT(wide[0], WithinAbs(0.268, 1e-3));

  // plug-in value for a 22.3 um spacing
  EquilibriumResult fake = eq;
  fake.z0 = {-22.3e-6, 0.0, 22.3e-6};
  CHECK_THAT(beam_weights(BeamSpec::focused(17e-6, 0.0, 1e-20), fake)[2], WithinAbs(0.032, 5e-4));
}

TEST_CASE("beam validation", "[dynamics]") {
  CHECK_THROWS_AS(BeamSpec::focused(0.0, 0.0, 1e-20).validate(), ConfigError);
  BeamSpec b = BeamSpec::broad(-1.0);
  CHECK_THROWS_AS(b.validate(), ConfigError);
  CHECK_NOTHROW(BeamSpec::broad(1e-20, Direction::x).validate());
}

TEST_CASE("single ion: closed-form oscillator", "[dynamics]") {
  TrapConfig c;
  c.n_ions = 1;
  const EquilibriumResult eq = solve_equilibrium(c);
  const double omega0 = effective_radial_frequencies(c).omega_rho_eff_x;
  const double gamma = hz_to_angular(20e3);
  const double f0 = 1e-20;
  const std::vector<double> wd = linspace(0.9 * omega0, 1.1 * omega0, 25);

  const Spectrum lr = linear_response_spectrum(c, eq, BeamSpec::broad(f0), wd, gamma);
  DriveScan scan;
  scan.omega_d_values = wd;
  scan.damping_rate = gamma;
  scan.settle_cycles = 400;
  scan.measure_cycles = 50;
  scan.steps_per_period = 100;
  const Spectrum td = simulate_spectrum(c, eq, BeamSpec::broad(f0), scan);
  CHECK(td.warnings.empty());
  for (std::size_t k = 0; k < wd.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const std::complex<double> x = oscillator(f0 / c.ion_mass, omega0, gamma, wd[k]);
    CHECK_THAT(lr.amplitude(row, 0), WithinRel(std::abs(x), 1e-10));
    CHECK_THAT(lr.phase(row, 0), WithinAbs(std::arg(x), 1e-10));
    CHECK_THAT(td.amplitude(row, 0), WithinRel(std::abs(x), 0.01));
    CHECK_THAT(td.phase(row, 0), WithinAbs(std::arg(x), 0.02));
  }
}

TEST_CASE("zero force gives zero response", "[dynamics]") {
  const TrapConfig c = at(100e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  DriveScan scan;
  scan.omega_d_values = {hz_to_angular(1.04e6), hz_to_angular(1.05e6)};
  const Spectrum td = simulate_spectrum(c, eq, BeamSpec::broad(0.0), scan);
  CHECK(td.amplitude.cwiseAbs().maxCoeff() == 0.0);
  const Spectrum lr = linear_response_spectrum(c, eq, BeamSpec::broad(0.0), scan.omega_d_values, scan.damping_rate);
  CHECK(lr.amplitude.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("three ions: time domain matches linear response", "[dynamics]") {
  const TrapConfig c = at(150e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  const double gamma = modes.frequencies.minCoeff() / 50.0;
  DriveScan scan;
  scan.omega_d_values = linspace(0.97 * modes.frequencies.minCoeff(), 1.03 * modes.frequencies.maxCoeff(), 12);
  scan.damping_rate = gamma;
  scan.settle_cycles = 120;
  scan.measure_cycles = 40;
  scan.steps_per_period = 200;
  scan.threads = 2;
  const Spectrum td = simulate_spectrum(c, eq, BeamSpec::broad(1e-20), scan);
  const Spectrum lr = linear_response_spectrum(c, eq, BeamSpec::broad(1e-20), scan.omega_d_values, gamma);
  for (Eigen::Index k = 0; k < td.amplitude.rows(); ++k)
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK_THAT(td.amplitude(k, i), WithinRel(lr.amplitude(k, i), 0.02));
      CHECK(std::abs(detail::wrap_phase(td.phase(k, i) - lr.phase(k, i))) < 0.05);
    }
}

TEST_CASE("spectrum invariants and resonance peaks", "[dynamics]") {
  const TrapConfig c = at(47e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  const double gamma = hz_to_angular(1e3);
  const std::vector<double> wd = linspace(0.98 * modes.frequencies.minCoeff(), 1.02 * modes.frequencies.maxCoeff(), 3000);
  const Spectrum s = linear_response_spectrum(c, eq, BeamSpec::broad(1e-20), wd, gamma);
  CHECK(s.amplitude.minCoeff() >= 0.0);
  CHECK(s.phase.maxCoeff() <= std::numbers::pi);
  CHECK(s.phase.minCoeff() > -std::numbers::pi);

  const Eigen::VectorXd sum = s.summed_amplitude();
  int peaks = 0;
  for (Eigen::Index k = 1; k + 1 < sum.size(); ++k) {
    if (sum(k) > sum(k - 1) && sum(k) >= sum(k + 1)) {
      ++peaks;
      const double nearest = (modes.frequencies.array() - wd[static_cast<std::size_t>(k)]).abs().minCoeff();
      CHECK(nearest < gamma / 2.0);
    }
  }
  CHECK(peaks == 3);
}

TEST_CASE("response of a mode scales with its overlap with the beam", "[dynamics]") {
  const TrapConfig c = at(120e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  const BeamSpec broad = BeamSpec::broad(1e-20);
  const BeamSpec focused = BeamSpec::focused(17e-6, eq.z0[1], 1e-20);
  const auto wb = beam_weights(broad, eq), wf = beam_weights(focused, eq);
  const Eigen::Map<const Eigen::VectorXd> vb(wb.data(), 3), vf(wf.data(), 3);
  for (int m = 0; m < 3; ++m) {
    const std::vector<double> at_mode{modes.frequencies(m)};
    const double gamma = hz_to_angular(1e3);
    const Spectrum sb = linear_response_spectrum(c, eq, broad, at_mode, gamma);
    const Spectrum sf = linear_response_spectrum(c, eq, focused, at_mode, gamma);
    const Eigen::VectorXd a = modes.eigenvectors.col(m);
    const double ratio = std::abs(modal_response(sb, 0, a)) / std::abs(modal_response(sf, 0, a));
    CHECK_THAT(ratio, WithinRel(std::abs(a.dot(vb)) / std::abs(a.dot(vf)), 1e-9));
  }
}

TEST_CASE("uniform drive in a linear trap leaves tilt and zigzag modes dark", "[dynamics]") {
  TrapConfig c = at(150e3);
  c.funnel_length = FunnelLength::infinite();
  const EquilibriumResult eq = solve_equilibrium(c);
  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  const std::vector<double> wd{modes.frequencies(1), modes.frequencies(2)};
  const Spectrum s = linear_response_spectrum(c, eq, BeamSpec::broad(1e-20), wd, hz_to_angular(1e3));
  const double com = std::abs(modal_response(s, 0, modes.eigenvectors.col(0)));
  CHECK(std::abs(modal_response(s, 0, modes.eigenvectors.col(1))) < 1e-10 * com);
  CHECK(std::abs(modal_response(s, 1, modes.eigenvectors.col(2))) < 1e-10 * com);
}

TEST_CASE("focused drive couples to outer ions only in the collective regime", "[dynamics]") {
  auto outer_over_middle = [](double fz) {
    const TrapConfig c = at(fz);
    const EquilibriumResult eq = solve_equilibrium(c);
    const ModeSolution modes = radial_modes(c, eq, Direction::x);
    const std::vector<double> wd = linspace(0.99 * modes.frequencies.minCoeff(), 1.01 * modes.frequencies.maxCoeff(), 800);
    const Spectrum s = linear_response_spectrum(c, eq, BeamSpec::focused(17e-6, eq.z0[1], 1e-20), wd, hz_to_angular(1e3));
    return std::max(s.amplitude.col(0).maxCoeff(), s.amplitude.col(2).maxCoeff()) / s.amplitude.col(1).maxCoeff();
  };
  const double lo = outer_over_middle(60e3), hi = outer_over_middle(180e3);
  CHECK(lo < 0.3);
  CHECK(hi > 2.0 * lo);
}

TEST_CASE("nonlinear model reduces to the linearized one at small amplitude", "[dynamics]") {
  const TrapConfig c = at(150e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  DriveScan scan;
  scan.omega_d_values = {modes.frequencies(0), 0.5 * (modes.frequencies(0) + modes.frequencies(1)), modes.frequencies(2)};
  scan.damping_rate = modes.frequencies(2) / 50.0;
  scan.settle_cycles = 150;
  scan.measure_cycles = 30;
  scan.steps_per_period = 150;
  const BeamSpec beam = BeamSpec::broad(1e-24);
  const Spectrum lin = simulate_spectrum(c, eq, beam, scan, DynamicsModel::linearized);
  const Spectrum full = simulate_spectrum(c, eq, beam, scan, DynamicsModel::full_nonlinear);
  const double spacing = eq.z0[1] - eq.z0[0];
  CHECK(lin.amplitude.maxCoeff() < 1e-3 * spacing);
  for (Eigen::Index k = 0; k < lin.amplitude.rows(); ++k)
    for (Eigen::Index i = 0; i < 3; ++i) CHECK_THAT(full.amplitude(k, i), WithinRel(lin.amplitude(k, i), 0.01));
}

TEST_CASE("free motion loses energy monotonically", "[dynamics]") {
  const TrapConfig c = at(150e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  const double gamma = hz_to_angular(10e3);
  const double dt = kTwoPi / (100.0 * effective_radial_frequencies(c).omega_rho_eff_x);
  Eigen::VectorXd dr = Eigen::VectorXd::Zero(9), v = Eigen::VectorXd::Zero(9);
  dr(0) = 1e-8;
  dr(4) = -5e-9;
  dr(8) = 2e-9;
  v(3) = 1e-3;
  for (DynamicsModel model : {DynamicsModel::linearized, DynamicsModel::full_nonlinear}) {
    ChainIntegrator integ(c, eq, model, gamma, dt);
    integ.set_state(dr, v);
    const double e0 = integ.energy();
    REQUIRE(e0 > 0.0);
    const long per_sample = static_cast<long>(0.25 / gamma / dt);
    double last = e0;
    bool monotone = true;
    for (int sample = 0; sample < 200; ++sample) {  // 50 damping times
      for (long s = 0; s < per_sample; ++s) integ.step();
      const double e = integ.energy();
      // the full potential difference bottoms out at round-off of V itself
      if (model == DynamicsModel::full_nonlinear && e < 1e-9 * e0) break;
      if (!(e < last)) monotone = false;
      last = e;
    }
    INFO("model " << static_cast<int>(model));
    CHECK(monotone);
    if (model == DynamicsModel::linearized) CHECK(last < 1e-15 * e0);
  }
}

TEST_CASE("scan validation, warnings and blow-up guard", "[dynamics]") {
  const TrapConfig c = at(100e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  DriveScan scan;
  scan.omega_d_values = {hz_to_angular(1.05e6)};
  scan.steps_per_period = 10;
  CHECK_THROWS_AS(simulate_spectrum(c, eq, BeamSpec::broad(1e-20), scan), ConfigError);

  scan.steps_per_period = 40;
  scan.settle_cycles = 5;
  const Spectrum s = simulate_spectrum(c, eq, BeamSpec::broad(1e-20), scan);
  CHECK(s.warnings.size() == 1);

  scan.omega_d_values = {-1.0};
  CHECK_THROWS_AS(simulate_spectrum(c, eq, BeamSpec::broad(1e-20), scan), ConfigError);

  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  scan.omega_d_values = {modes.frequencies(0)};
  scan.damping_rate = 0.0;
  scan.settle_cycles = 2000;
  CHECK_THROWS_AS(simulate_spectrum(c, eq, BeamSpec::broad(1e-9), scan), InstabilityError);
}

TEST_CASE("phase wrapping", "[dynamics]") {
  CHECK_THAT(detail::wrap_phase(3.5 * std::numbers::pi), WithinAbs(-0.5 * std::numbers::pi, 1e-12));
  CHECK(detail::wrap_phase(std::numbers::pi) == std::numbers::pi);
  CHECK(detail::wrap_phase(-std::numbers::pi) == std::numbers::pi);
}
