#pragma once

// Radial fluorescence profile of one oscillating ion:
//
//   counts(x) = B + C (G_sigma * rho_A)(x - x0)
//
// rho_A is the time-averaged position density of x = A sin(phase), i.e. the
// arcsine density 1 / (pi sqrt(A^2 - u^2)) on |u| < A. With u = A sin(t) the
// convolution becomes (1/pi) int_{-pi/2}^{pi/2} G_sigma(x - A sin t) dt, which
// is smooth and reduces to G_sigma at A = 0.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <Eigen/Dense>

#include "tapermode/errors.hpp"
#include "tapermode/levmar.hpp"

namespace tapermode {

struct FluorescenceProfile {
  std::vector<double> positions;  // pixel centers, m (projected), strictly increasing
  std::vector<double> counts;     // non-negative
  double psf_sigma_prior = 0.0;   // m; <= 0 means estimate from the data
};

struct ProfileFit {
  double amplitude = 0.0;  // A, m
  double amplitude_error = 0.0;
  double sigma = 0.0;      // PSF width, m
  double center = 0.0;     // x0, m
  double baseline = 0.0;   // B
  double scale = 0.0;      // C (counts x m)
  bool converged = false;
  // Amplitude not resolved against the PSF: A = 0 lies inside the 95%
  // profile-likelihood interval.
  bool degenerate = false;
};

// Normalized density of the PSF-blurred sinusoidal motion at offset x.
inline double oscillation_psf_density(double x, double amplitude, double sigma) {
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  if (amplitude == 0.0) return norm * std::exp(-0.5 * (x / sigma) * (x / sigma));
  auto integrand = [&](double t) {
    const double d = (x - amplitude * std::sin(t)) / sigma;
    return std::exp(-0.5 * d * d);
  };
  const double half_pi = 0.5 * std::numbers::pi;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, -half_pi, half_pi, 12, 1e-11);
  return norm * value / std::numbers::pi;
}

namespace detail {

inline void validate_profile(const FluorescenceProfile& p) {
  if (p.positions.size() != p.counts.size()) throw FitError("profile positions and counts differ in length");
  if (p.positions.size() < 8) throw FitError("profile needs at least 8 samples");
  for (std::size_t i = 0; i < p.positions.size(); ++i) {
    if (!std::isfinite(p.counts[i]) || p.counts[i] < 0.0) throw FitError("profile counts must be finite and >= 0");
    if (i > 0 && !(p.positions[i] > p.positions[i - 1])) throw FitError("profile positions must increase");
  }
}

}  // namespace detail

// Counting noise leaves a flat valley; a tight ftol just crawls along it.
inline LevMarOptions profile_fit_defaults() {
  LevMarOptions o;
  o.ftol = 1e-10;
  o.xtol = 1e-10;
  o.max_iterations = 2000;
  return o;
}

inline ProfileFit fit_fluorescence_amplitude(const FluorescenceProfile& profile,
                                             const LevMarOptions& options = profile_fit_defaults()) {
  detail::validate_profile(profile);
  const std::size_t m = profile.positions.size();

  // Moments of the baseline-subtracted profile seed the fit.
  const double floor = *std::min_element(profile.counts.begin(), profile.counts.end());
  double w_sum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double w = profile.counts[i] - floor;
    w_sum += w;
    mean += w * profile.positions[i];
  }
  if (!(w_sum > 0.0)) throw FitError("profile has no signal above its floor");
  mean /= w_sum;
  double var = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = profile.positions[i] - mean;
    var += (profile.counts[i] - floor) * d * d;
  }
  var /= w_sum;

  // Work in units of the profile spread so the optimizer sees O(1) numbers.
  const double unit = std::sqrt(var);
  const double cmax = *std::max_element(profile.counts.begin(), profile.counts.end());
  std::vector<double> x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = (profile.positions[i] - mean) / unit;
    y[i] = profile.counts[i] / cmax;
  }
  const double dx = (x.back() - x.front()) / static_cast<double>(m - 1);

  const double sigma0 = profile.psf_sigma_prior > 0.0 ? profile.psf_sigma_prior / unit : 1.0 / std::sqrt(2.0);
  const double amp_moment = std::sqrt(std::max(2.0 * (1.0 - sigma0 * sigma0), 0.0));

  // Parameters: A, sigma, x0, B, C (scaled units). Residuals are signed
  // Poisson deviances in count units; 1/sqrt(counts) weights starve the
  // sparse tails and fake a flat-topped (A > 0) shape.
  auto residual = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      const double mu = std::max(cmax * (p(3) + p(4) * oscillation_psf_density(x[i] - p(2), p(0), p(1))), 1e-300);
      const double c = profile.counts[i];
      const double dev = 2.0 * (mu - c + (c > 0.0 ? c * std::log(c / mu) : 0.0));
      r(static_cast<Eigen::Index>(i)) = std::copysign(std::sqrt(std::max(dev, 0.0)), mu - c);
    }
    return r;
  };
  Eigen::VectorXd lower(5), upper(5);
  lower << 0.0, 1e-3 * dx, x.front(), 0.0, 0.0;
  upper << 2.0 * (x.back() - x.front()), x.back() - x.front(), x.back(), 10.0, 1e3;
  auto jacobian = [&](const Eigen::VectorXd& p) {
    return numeric_jacobian(residual, p, residual(p), lower, upper);
  };

  const double base0 = floor / cmax;
  const double scale0 = (w_sum / cmax) * dx;
  LevMarResult best;
  bool have = false;
  for (double a0 : {std::max(amp_moment, 0.3 * sigma0), 0.3 * sigma0}) {
    Eigen::VectorXd p0(5);
    p0 << a0, sigma0, 0.0, base0, scale0;
    LevMarResult fit = levenberg_marquardt(residual, jacobian, p0, lower, upper, options);
    if (!have || fit.cost < best.cost) {
      best = std::move(fit);
      have = true;
    }
  }
  if (!best.converged) throw FitError("profile fit did not converge (" + best.reason + ")");

  ProfileFit out;
  out.amplitude = best.params(0) * unit;
  out.amplitude_error = best.standard_errors(0) * unit;
  out.sigma = best.params(1) * unit;
  out.center = mean + best.params(2) * unit;
  out.baseline = best.params(3) * cmax;
  out.scale = best.params(4) * cmax * unit;
  out.converged = true;

  // Near A = 0 the shape changes like a wider PSF to first order; A is told
  // apart only through the fourth moment, so linearized errors are useless
  // there. Use the profile likelihood in A instead: refit the rest at fixed A.
  if (best.params(0) < best.params(1)) {
    const Eigen::VectorXd lo4 = lower.tail(4), hi4 = upper.tail(4);
    Eigen::VectorXd warm = best.params.tail(4);
    auto profile_deviance = [&](double a) {
      auto r4 = [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd p(5);
        p << a, q;
        return residual(p);
      };
      auto j4 = [&](const Eigen::VectorXd& q) { return numeric_jacobian(r4, q, r4(q), lo4, hi4); };
      const LevMarResult f = levenberg_marquardt(r4, j4, warm, lo4, hi4, options);
      return std::pair{f.residuals.squaredNorm(), f.params};
    };
    double d_min = best.residuals.squaredNorm();
    double a_best = best.params(0);
    auto [d_zero, at_zero] = profile_deviance(0.0);
    if (d_zero < d_min) {
      // the bounded start missed the stationary solution
      d_min = d_zero;
      a_best = 0.0;
      out.amplitude = 0.0;
      out.sigma = at_zero(0) * unit;
      out.center = mean + at_zero(1) * unit;
      out.baseline = at_zero(2) * cmax;
      out.scale = at_zero(3) * cmax * unit;
      warm = at_zero;
    }
    const double s2 = std::max(d_min / static_cast<double>(m - 5), std::numeric_limits<double>::min());
    // A where the profile deviance has risen by `level` (in units of s2).
    auto crossing = [&](double inside, double outside) {
      for (int k = 0; k < 8; ++k) {
        const double mid = 0.5 * (inside + outside);
        (profile_deviance(mid).first - d_min <= s2 ? inside : outside) = mid;
      }
      return 0.5 * (inside + outside);
    };
    double step = std::max(best.standard_errors(0), 0.05 * best.params(1));
    double outside = a_best + step;
    for (int k = 0; k < 12 && profile_deviance(outside).first - d_min <= s2; ++k) {
      step *= 2.0;
      outside = std::min(a_best + step, upper(0));
      if (outside == upper(0)) break;
    }
    const double a_hi = crossing(a_best, outside);
    const double a_lo = d_zero - d_min <= s2 ? 0.0 : crossing(a_best, 0.0);
    out.amplitude_error = 0.5 * (a_hi - a_lo) * unit;
    // 95% interval reaches zero
    out.degenerate = d_zero - d_min <= 3.84 * s2;
  } else {
    out.degenerate = false;
  }
  return out;
}

}  // namespace tapermode
