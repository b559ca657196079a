#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "tapermode/profile.hpp"

using namespace tapermode;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

FluorescenceProfile model_profile(double amplitude, double sigma, double center, double baseline, double scale,
                                  double half_range, int bins) {
  FluorescenceProfile p;
  for (int i = 0; i < bins; ++i) {
    const double x = -half_range + 2.0 * half_range * (i + 0.5) / bins;
    p.positions.push_back(x);
    p.counts.push_back(baseline + scale * oscillation_psf_density(x - center, amplitude, sigma));
  }
  return p;
}

// Histogram of x0 + A sin(phase) + N(0, sigma) samples.
FluorescenceProfile monte_carlo(double amplitude, double sigma, double x0, int samples, int bins,
                                double half_range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> psf(0.0, sigma);
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  const double width = 2.0 * half_range / bins;
  for (int s = 0; s < samples; ++s) {
    const double x = x0 + amplitude * std::sin(phase(rng)) + psf(rng);
    const int b = static_cast<int>(std::floor((x + half_range) / width));
    if (b >= 0 && b < bins) counts[static_cast<std::size_t>(b)] += 1.0;
  }
  FluorescenceProfile p;
  for (int i = 0; i < bins; ++i) p.positions.push_back(-half_range + width * (i + 0.5));
  p.counts = counts;
  return p;
}

}  // namespace

TEST_CASE("blurred oscillation density", "[profile]") {
  const double sigma = 1.0;
  // unit normalization
  double total = 0.0;
  for (double x = -12.0; x <= 12.0; x += 0.01) total += 0.01 * oscillation_psf_density(x, 3.0, sigma);
  CHECK_THAT(total, WithinAbs(1.0, 1e-6));
  // A = 0 is the Gaussian itself
  CHECK_THAT(oscillation_psf_density(0.7, 0.0, sigma), WithinRel(std::exp(-0.245) / std::sqrt(2.0 * std::numbers::pi), 1e-14));
  CHECK_THAT(oscillation_psf_density(0.7, 1e-9, sigma), WithinRel(oscillation_psf_density(0.7, 0.0, sigma), 1e-9));
  // arcsine horns survive for A well above sigma, not for A = sigma
  CHECK(oscillation_psf_density(0.0, 3.0, sigma) < oscillation_psf_density(2.7, 3.0, sigma));
  CHECK(oscillation_psf_density(0.0, 1.0, sigma) > oscillation_psf_density(0.8, 1.0, sigma));
  CHECK(oscillation_psf_density(1.3, 2.0, sigma) == oscillation_psf_density(-1.3, 2.0, sigma));
}

TEST_CASE("stationary ion", "[profile]") {
  const double sigma = 2e-6;
  FluorescenceProfile p = model_profile(0.0, sigma, 0.3e-6, 5.0, 1e-3, 12e-6, 120);
  const ProfileFit f = fit_fluorescence_amplitude(p);
  CHECK(f.converged);
  CHECK(f.amplitude < 0.05 * sigma);
  CHECK_THAT(f.sigma, WithinRel(sigma, 1e-3));
  CHECK_THAT(f.center, WithinAbs(0.3e-6, 1e-9));
}

TEST_CASE("noiseless model round trip", "[profile]") {
  for (double a_over_sigma : {1.0, 2.0, 3.0}) {
    const double sigma = 1.5e-6;
    FluorescenceProfile p = model_profile(a_over_sigma * sigma, sigma, -0.2e-6, 10.0, 2e-3, 15e-6, 150);
    const ProfileFit f = fit_fluorescence_amplitude(p);
    CHECK_THAT(f.amplitude, WithinRel(a_over_sigma * sigma, 1e-5));
    CHECK_THAT(f.sigma, WithinRel(sigma, 1e-5));
    CHECK_THAT(f.baseline, WithinRel(10.0, 1e-5));
    CHECK_FALSE(f.degenerate);
  }
}

TEST_CASE("Monte-Carlo profile with A = 3 sigma", "[profile]") {
  const double sigma = 1.0;
  FluorescenceProfile p = monte_carlo(3.0 * sigma, sigma, 0.1, 1000000, 200, 8.0, 2024);
  const ProfileFit f = fit_fluorescence_amplitude(p);
  CHECK_THAT(f.amplitude, WithinRel(3.0 * sigma, 0.02));
  CHECK_THAT(f.sigma, WithinRel(sigma, 0.03));
  CHECK(f.amplitude_error < 0.02 * f.amplitude);
}

TEST_CASE("scale equivariance", "[profile]") {
  const FluorescenceProfile base = monte_carlo(2.0, 1.0, 0.0, 200000, 120, 7.0, 9);
  const ProfileFit a = fit_fluorescence_amplitude(base);
  FluorescenceProfile scaled = base;
  for (double& x : scaled.positions) x *= 3.7e-6;
  const ProfileFit b = fit_fluorescence_amplitude(scaled);
  CHECK_THAT(b.amplitude, WithinRel(a.amplitude * 3.7e-6, 1e-6));
  CHECK_THAT(b.sigma, WithinRel(a.sigma * 3.7e-6, 1e-6));
}

TEST_CASE("small amplitudes are flagged, not failed", "[profile]") {
  const FluorescenceProfile p = monte_carlo(0.0, 1.0, 0.0, 20000, 60, 5.0, 4);
  const ProfileFit f = fit_fluorescence_amplitude(p);
  CHECK(f.converged);
  CHECK(f.degenerate);
  CHECK(f.amplitude_error > f.amplitude);
}

TEST_CASE("profile validation", "[profile]") {
  FluorescenceProfile p;
  p.positions = {0, 1, 2};
  p.counts = {1, 2, 1};
  CHECK_THROWS_AS(fit_fluorescence_amplitude(p), FitError);
  p = model_profile(1.0, 1.0, 0.0, 0.0, 1.0, 5.0, 20);
  p.counts[3] = -1.0;
  CHECK_THROWS_AS(fit_fluorescence_amplitude(p), FitError);
  p = model_profile(1.0, 1.0, 0.0, 0.0, 1.0, 5.0, 20);
  std::swap(p.positions[2], p.positions[3]);
  CHECK_THROWS_AS(fit_fluorescence_amplitude(p), FitError);
  p = model_profile(1.0, 1.0, 0.0, 0.0, 1.0, 5.0, 20);
  std::fill(p.counts.begin(), p.counts.end(), 3.0);
  CHECK_THROWS_AS(fit_fluorescence_amplitude(p), FitError);
}
