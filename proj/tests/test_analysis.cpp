#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "tapermode/analysis.hpp"
#include "tapermode/sweep.hpp"

using namespace tapermode;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> lorentz_sum(const std::vector<double>& x, const std::vector<LorentzianPeak>& peaks,
                                double offset) {
  std::vector<double> y(x.size(), offset);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (const auto& p : peaks) {
      const double s = (x[i] - p.center) / p.half_width;
      y[i] += p.height / (1.0 + s * s);
    }
  return y;
}

TrapConfig at(double omega_z_hz) {
  TrapConfig c;
  c.omega_z = hz_to_angular(omega_z_hz);
  return c;
}

const std::vector<LorentzianPeak> kPeaks{
    {hz_to_angular(1.050e6), hz_to_angular(1.5e3), 2.0e-6},
    {hz_to_angular(1.030e6), hz_to_angular(1.2e3), 1.0e-6},
    {hz_to_angular(1.010e6), hz_to_angular(1.8e3), 1.5e-6},
};

}  // namespace

TEST_CASE("noiseless Lorentzian sum round trip", "[analysis]") {
  const std::vector<double> w = linspace(hz_to_angular(0.99e6), hz_to_angular(1.07e6), 800);
  const LorentzianModel m = fit_sum_spectrum(w, lorentz_sum(w, kPeaks, 1e-7), 3);
  REQUIRE(m.peaks.size() == 3);
  CHECK(m.converged);
  for (int k = 0; k < 3; ++k) {
    CHECK_THAT(m.peaks[k].center, WithinRel(kPeaks[k].center, 1e-6));
    CHECK_THAT(m.peaks[k].half_width, WithinRel(kPeaks[k].half_width, 1e-4));
    CHECK_THAT(m.peaks[k].height, WithinRel(kPeaks[k].height, 1e-4));
  }
  CHECK_THAT(m.offset, WithinRel(1e-7, 1e-4));
  CHECK(m.residual_norm < 1e-12);
  CHECK_THAT(m(kPeaks[0].center), WithinRel(lorentz_sum({kPeaks[0].center}, kPeaks, 1e-7)[0], 1e-4));
}

TEST_CASE("all-zero and too-short spectra", "[analysis]") {
  const std::vector<double> w = linspace(1.0, 2.0, 50);
  const std::vector<double> zero(50, 0.0);
  try {
    fit_sum_spectrum(w, zero, 3);
    FAIL("expected PeakDetectionError");
  } catch (const PeakDetectionError& e) {
    CHECK(e.found() == 0);
  }
  // one bump, three requested
  std::vector<double> one(50);
  for (int i = 0; i < 50; ++i) one[i] = 1.0 / (1.0 + std::pow((w[i] - 1.5) / 0.05, 2));
  try {
    fit_sum_spectrum(w, one, 3);
    FAIL("expected PeakDetectionError");
  } catch (const PeakDetectionError& e) {
    CHECK(e.found() == 1);
  }
  CHECK_THROWS_AS(fit_sum_spectrum(linspace(1.0, 2.0, 12), std::vector<double>(12, 1.0), 3), FitError);
  CHECK_THROWS_AS(fit_sum_spectrum(w, std::vector<double>(49, 1.0), 1), FitError);
  CHECK_THROWS_AS(fit_sum_spectrum(w, one, 0), FitError);
}

TEST_CASE("linear-response spectrum at 150 kHz", "[analysis]") {
  const TrapConfig c = at(150e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  const std::vector<double> w = linspace(0.9 * modes.frequencies.minCoeff(), 1.1 * modes.frequencies.maxCoeff(), 1500);
  const Spectrum s = linear_response_spectrum(c, eq, BeamSpec::broad(1e-20), w, hz_to_angular(1e3));
  const Eigen::VectorXd sum = s.summed_amplitude();
  const LorentzianModel m = fit_sum_spectrum(w, std::vector<double>(sum.data(), sum.data() + sum.size()), 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(m.peaks[k].center - modes.frequencies(k)) < m.peaks[k].half_width / 2.0);
  }
}

TEST_CASE("centers survive 5% multiplicative noise", "[analysis]") {
  const std::vector<double> w = linspace(hz_to_angular(0.99e6), hz_to_angular(1.07e6), 800);
  const std::vector<double> clean = lorentz_sum(w, kPeaks, 1e-7);
  int pass = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<double> y = clean;
    for (double& v : y) v *= 1.0 + noise(rng);
    bool ok = true;
    try {
      const LorentzianModel m = fit_sum_spectrum(w, y, 3);
      for (int k = 0; k < 3; ++k) ok = ok && std::abs(m.peaks[k].center - kPeaks[k].center) < kPeaks[k].half_width / 4.0;
    } catch (const FitError&) {
      ok = false;
    }
    pass += ok;
  }
  CHECK(pass >= 95);
}

TEST_CASE("fixed-center heights and zero participation", "[analysis]") {
  const std::vector<double> w = linspace(hz_to_angular(0.99e6), hz_to_angular(1.07e6), 600);
  Eigen::MatrixXd truth(2, 3);
  truth << 1.0, 0.0, 0.5,
           0.3, 0.8, 0.0;
  truth *= 1e-6;
  Eigen::MatrixXd amp(static_cast<Eigen::Index>(w.size()), 2);
  for (int ion = 0; ion < 2; ++ion) {
    std::vector<LorentzianPeak> p = kPeaks;
    for (int k = 0; k < 3; ++k) p[k].height = truth(ion, k);
    const auto y = lorentz_sum(w, p, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) amp(static_cast<Eigen::Index>(i), ion) = y[i];
  }
  std::vector<double> centers, hints;
  for (const auto& p : kPeaks) {
    centers.push_back(p.center);
    hints.push_back(p.half_width);
  }
  const FixedCenterFit f = fit_fixed_center_amplitudes(w, amp, centers, hints);
  CHECK(f.converged[0]);
  CHECK(f.converged[1]);
  for (int ion = 0; ion < 2; ++ion)
    for (int k = 0; k < 3; ++k) {
      if (truth(ion, k) > 0.0) {
        CHECK_THAT(f.height(ion, k), WithinRel(truth(ion, k), 1e-4));
        CHECK_THAT(f.half_width(ion, k), WithinRel(kPeaks[k].half_width, 1e-4));
      } else {
        CHECK(f.height(ion, k) < 1e-3 * truth.col(k).maxCoeff());
      }
    }
  CHECK_THROWS_AS(fit_fixed_center_amplitudes(w, Eigen::MatrixXd::Zero(600, 2), centers, hints), FitError);
  CHECK_THROWS_AS(fit_fixed_center_amplitudes(w, amp, centers, std::vector<double>{1.0}), FitError);
}

TEST_CASE("one ion: fixed-center fit reproduces the summed fit", "[analysis]") {
  TrapConfig c = at(100e3);
  c.n_ions = 1;
  const EquilibriumResult eq = solve_equilibrium(c);
  const double w0 = effective_radial_frequencies(c).omega_rho_eff_x;
  const std::vector<double> w = linspace(0.98 * w0, 1.02 * w0, 400);
  const Spectrum s = linear_response_spectrum(c, eq, BeamSpec::broad(1e-20), w, hz_to_angular(2e3));
  const Eigen::VectorXd sum = s.summed_amplitude();
  const LorentzianModel m = fit_sum_spectrum(w, std::vector<double>(sum.data(), sum.data() + sum.size()), 1);
  const std::vector<double> center{m.peaks[0].center}, hint{m.peaks[0].half_width};
  const FixedCenterFit f = fit_fixed_center_amplitudes(w, s.amplitude, center, hint);
  CHECK_THAT(f.height(0, 0), WithinRel(m.peaks[0].height, 1e-6));
  CHECK_THAT(f.half_width(0, 0), WithinRel(m.peaks[0].half_width, 1e-6));
  CHECK_THAT(f.offset(0), WithinRel(m.offset, 1e-5));
}

TEST_CASE("reconstruction arithmetic", "[analysis]") {
  Eigen::MatrixXd h(3, 1), ph(3, 1);
  h << 1.0, 1.0, 1.0;
  ph << 0.1, 0.1, 0.1;
  EigenvectorEstimate e = reconstruct_eigenvectors(h, ph);
  for (int i = 0; i < 3; ++i) CHECK_THAT(e.components(i, 0), WithinAbs(1.0 / std::sqrt(3.0), 1e-15));
  CHECK(e.warnings.empty());

  h << 1.0, 0.5, 1.0;
  ph << -1.5, -1.5 + std::numbers::pi, -1.5;
  e = reconstruct_eigenvectors(h, ph);
  CHECK_THAT(e.components(0, 0), WithinAbs(2.0 / 3.0, 1e-15));
  CHECK_THAT(e.components(1, 0), WithinAbs(-1.0 / 3.0, 1e-15));
  CHECK_THAT(e.components(2, 0), WithinAbs(2.0 / 3.0, 1e-15));

  // largest entry negative after sign inference -> global flip
  h << 0.2, 1.0, 0.2;
  ph << 0.0, std::numbers::pi, 0.0;
  e = reconstruct_eigenvectors(h, ph);
  CHECK(e.components(1, 0) > 0.0);
  CHECK(e.components(0, 0) < 0.0);

  ph << 0.0, 0.0, std::numbers::pi / 2 + 0.1;
  e = reconstruct_eigenvectors(h, ph);
  CHECK(e.warnings.size() == 1);

  Eigen::MatrixXd err = Eigen::MatrixXd::Constant(3, 1, 0.01);
  e = reconstruct_eigenvectors(h, ph, {}, err);
  CHECK(e.standard_error.minCoeff() > 0.0);
  CHECK(e.standard_error.maxCoeff() < 0.02);

  CHECK_THROWS_AS(reconstruct_eigenvectors(Eigen::MatrixXd::Zero(3, 1), ph), FitError);
  CHECK_THROWS_AS(reconstruct_eigenvectors(-h, ph), FitError);
  CHECK_THROWS_AS(reconstruct_eigenvectors(h, Eigen::MatrixXd::Zero(2, 1)), FitError);
}

TEST_CASE("closed loop on linearized data at 100 kHz", "[analysis]") {
  const TrapConfig c = at(100e3);
  const EquilibriumResult eq = solve_equilibrium(c);
  const ModeSolution modes = radial_modes(c, eq, Direction::x);
  const std::vector<double> w = linspace(0.9 * modes.frequencies.minCoeff(), 1.1 * modes.frequencies.maxCoeff(), 2400);
  const Spectrum s = linear_response_spectrum(c, eq, BeamSpec::broad(1e-20), w, hz_to_angular(500.0));
  const Eigen::VectorXd sum = s.summed_amplitude();
  const LorentzianModel m = fit_sum_spectrum(w, std::vector<double>(sum.data(), sum.data() + sum.size()), 3);
  std::vector<double> centers, widths;
  for (const auto& p : m.peaks) {
    centers.push_back(p.center);
    widths.push_back(p.half_width);
  }
  const FixedCenterFit f = fit_fixed_center_amplitudes(w, s.amplitude, centers, widths);
  const EigenvectorEstimate e = reconstruct_eigenvectors(f.height, phases_at_centers(s, centers), centers, f.height_error);
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd a = modes.eigenvectors.col(k), b = e.components.col(k);
    CHECK_THAT(b.norm(), WithinAbs(1.0, 1e-12));
    CHECK((b.cwiseAbs() - a.cwiseAbs()).cwiseAbs().maxCoeff() < 0.05);
    CHECK(std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff()) < 0.05);
    for (int j = 0; j < k; ++j) CHECK(std::abs(b.dot(e.components.col(j))) < 0.1);
  }
}

TEST_CASE("phase interpolation", "[analysis]") {
  Spectrum s;
  s.omega_d = {1.0, 2.0, 3.0};
  s.amplitude = Eigen::MatrixXd::Ones(3, 1);
  s.phase.resize(3, 1);
  s.phase << 0.0, 0.5, 1.0;
  CHECK_THAT(phase_at(s, 0, 1.5), WithinAbs(0.25, 1e-12));
  CHECK(phase_at(s, 0, 0.5) == 0.0);
  CHECK(phase_at(s, 0, 9.0) == 1.0);
  // interpolation goes through the complex plane, not across the branch cut
  s.phase << 3.0, -3.0, -3.0;
  CHECK(std::abs(phase_at(s, 0, 1.5)) > 3.0);
}
