#pragma once

// Spectrum reduction: a sum of Lorentzians plus constant offset fitted to the
// ion-summed amplitude spectrum gives the mode frequencies; per-ion fits with
// those centers frozen give heights, and heights plus relative phases give
// the eigenvector components.
//
//   L(w) = c + sum_k h_k / (1 + ((w - W_k) / g_k)^2)

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tapermode/dynamics.hpp"
#include "tapermode/errors.hpp"
#include "tapermode/levmar.hpp"
#include "tapermode/normal_modes.hpp"

namespace tapermode {

struct LorentzianPeak {
  double center = 0.0;      // rad/s
  double half_width = 0.0;  // HWHM, rad/s
  double height = 0.0;
};

struct LorentzianModel {
  std::vector<LorentzianPeak> peaks;  // descending center
  double offset = 0.0;
  std::vector<LorentzianPeak> errors;  // standard errors, same layout as peaks
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;

  double operator()(double w) const {
    double y = offset;
    for (const auto& p : peaks) {
      const double s = (w - p.center) / p.half_width;
      y += p.height / (1.0 + s * s);
    }
    return y;
  }
};

struct FitOptions {
  // Fixed-center half-widths are confined to [lo, hi] x the summed-fit value.
  double half_width_lower_factor = 0.5;
  double half_width_upper_factor = 2.0;
  LevMarOptions levmar{};
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::vector<double> moving_average(std::span<const double> y, int window) {
  const int half = window / 2;
  const int n = static_cast<int>(y.size());
  std::vector<double> out(y.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int k = lo; k <= hi; ++k) s += y[k];
    out[i] = s / (hi - lo + 1);
  }
  return out;
}

// Indices of local maxima, most prominent first. Prominence: height above
// the higher of the two valleys separating the peak from taller ground.
inline std::vector<int> local_maxima(const std::vector<double>& y) {
  std::vector<int> idx;
  const int n = static_cast<int>(y.size());
  for (int i = 1; i + 1 < n; ++i) {
    if (y[i] > y[i - 1] && y[i] >= y[i + 1]) idx.push_back(i);
  }
  std::vector<double> prom(static_cast<std::size_t>(n), 0.0);
  for (int i : idx) {
    double left = y[i], right = y[i];
    for (int j = i - 1; j >= 0 && y[j] <= y[i]; --j) left = std::min(left, y[j]);
    for (int j = i + 1; j < n && y[j] <= y[i]; ++j) right = std::min(right, y[j]);
    prom[static_cast<std::size_t>(i)] = y[i] - std::max(left, right);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return prom[static_cast<std::size_t>(a)] > prom[static_cast<std::size_t>(b)];
  });
  return idx;
}

// Lorentzian term and its partials with respect to (center, half_width, height).
struct LorentzTerm {
  double value, d_center, d_width, d_height;
};

inline LorentzTerm lorentz(double w, double center, double width, double height) {
  const double s = (w - center) / width;
  const double q = 1.0 / (1.0 + s * s);
  return {height * q, height * 2.0 * s * q * q / width, height * 2.0 * s * s * q * q / width, q};
}

// Affine normalization of the frequency axis so the optimizer sees O(1) numbers.
struct AxisScale {
  double shift, scale;
  double to(double w) const { return (w - shift) / scale; }
  double from(double x) const { return shift + scale * x; }
};

inline void check_scan(std::span<const double> omega, std::size_t values) {
  if (omega.size() != values) throw FitError("frequency and amplitude arrays differ in length");
  for (std::size_t i = 1; i < omega.size(); ++i) {
    if (!(omega[i] > omega[i - 1])) throw FitError("scan frequencies must be strictly increasing");
  }
}

}  // namespace detail

inline LorentzianModel fit_sum_spectrum(std::span<const double> omega,
                                        std::span<const double> amplitude, int n_peaks,
                                        const FitOptions& options = {}) {
  if (n_peaks < 1) throw FitError("n_peaks must be >= 1");
  detail::check_scan(omega, amplitude.size());
  const std::size_t need = 4 * static_cast<std::size_t>(n_peaks) + 1;
  if (omega.size() < need) {
    throw FitError("sum-spectrum fit needs at least " + std::to_string(need) + " points");
  }

  const double ymax = *std::max_element(amplitude.begin(), amplitude.end());
  const std::vector<double> smooth = detail::moving_average(amplitude, 5);
  std::vector<int> maxima = detail::local_maxima(smooth);
  if (!(ymax > 0.0) || static_cast<int>(maxima.size()) < n_peaks) {
    const int found = ymax > 0.0 ? static_cast<int>(maxima.size()) : 0;
    throw PeakDetectionError("found " + std::to_string(found) + " local maxima, need " +
                                 std::to_string(n_peaks),
                             found);
  }
  maxima.resize(static_cast<std::size_t>(n_peaks));
  std::sort(maxima.begin(), maxima.end());

  const std::size_t m = omega.size();
  const detail::AxisScale ax{omega.front(), omega.back() - omega.front()};
  std::vector<double> x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = ax.to(omega[i]);
    y[i] = amplitude[i] / ymax;
  }
  const double step = x[1] - x[0];
  const double offset0 = detail::percentile(y, 0.10);

  const Eigen::Index np = 3 * n_peaks + 1;
  Eigen::VectorXd p0(np), lower(np), upper(np);
  for (int k = 0; k < n_peaks; ++k) {
    const int i = maxima[static_cast<std::size_t>(k)];
    p0.segment<3>(3 * k) << x[i], 2.0 * step, std::max(y[i] - offset0, 1e-6);
    lower.segment<3>(3 * k) << 0.0, 1e-3 * step, 0.0;
    upper.segment<3>(3 * k) << 1.0, 1.0, 10.0;
  }
  p0(np - 1) = offset0;
  lower(np - 1) = 0.0;
  upper(np - 1) = 10.0;

  auto residual = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      double v = p(np - 1);
      for (int k = 0; k < n_peaks; ++k) v += detail::lorentz(x[i], p(3 * k), p(3 * k + 1), p(3 * k + 2)).value;
      r(static_cast<Eigen::Index>(i)) = v - y[i];
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(m), np);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      for (int k = 0; k < n_peaks; ++k) {
        const auto t = detail::lorentz(x[i], p(3 * k), p(3 * k + 1), p(3 * k + 2));
        j(row, 3 * k) = t.d_center;
        j(row, 3 * k + 1) = t.d_width;
        j(row, 3 * k + 2) = t.d_height;
      }
      j(row, np - 1) = 1.0;
    }
    return j;
  };

  const LevMarResult fit = levenberg_marquardt(residual, jacobian, p0, lower, upper, options.levmar);
  if (!fit.converged) throw FitError("sum-spectrum fit did not converge (" + fit.reason + ")");

  LorentzianModel model;
  for (int k = 0; k < n_peaks; ++k) {
    model.peaks.push_back({ax.from(fit.params(3 * k)), ax.scale * fit.params(3 * k + 1),
                           ymax * fit.params(3 * k + 2)});
    model.errors.push_back({ax.scale * fit.standard_errors(3 * k),
                            ax.scale * fit.standard_errors(3 * k + 1),
                            ymax * fit.standard_errors(3 * k + 2)});
  }
  model.offset = ymax * fit.params(np - 1);
  model.residual_norm = ymax * fit.residuals.norm();
  model.iterations = fit.iterations;
  model.converged = true;

  std::vector<std::size_t> order(model.peaks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return model.peaks[a].center > model.peaks[b].center; });
  LorentzianModel sorted = model;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted.peaks[k] = model.peaks[order[k]];
    sorted.errors[k] = model.errors[order[k]];
  }
  return sorted;
}

struct FixedCenterFit {
  std::vector<double> centers;    // rad/s, one per mode
  Eigen::MatrixXd height;         // (ion, mode)
  Eigen::MatrixXd height_error;   // (ion, mode)
  Eigen::MatrixXd half_width;     // (ion, mode), rad/s
  Eigen::VectorXd offset;         // per ion
  std::vector<bool> converged;    // per ion
};

// Per-ion fits with the mode centers frozen; only heights, half-widths and
// the offset vary. `half_width_hint` (per mode) sets the admissible widths.
inline FixedCenterFit fit_fixed_center_amplitudes(std::span<const double> omega,
                                                  const Eigen::MatrixXd& amplitudes,
                                                  std::span<const double> centers,
                                                  std::span<const double> half_width_hint,
                                                  const FitOptions& options = {}) {
  const auto m = static_cast<Eigen::Index>(omega.size());
  detail::check_scan(omega, static_cast<std::size_t>(amplitudes.rows()));
  if (centers.size() != half_width_hint.size()) {
    throw FitError("need one half-width hint per center");
  }
  const auto n_modes = static_cast<Eigen::Index>(centers.size());
  const Eigen::Index n_ions = amplitudes.cols();
  if (m < 2 * n_modes + 2) throw FitError("too few scan points for the fixed-center fit");

  const detail::AxisScale ax{omega.front(), omega.back() - omega.front()};
  std::vector<double> x(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) x[static_cast<std::size_t>(i)] = ax.to(omega[static_cast<std::size_t>(i)]);
  std::vector<double> cx(centers.size()), wx(centers.size());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    cx[k] = ax.to(centers[k]);
    wx[k] = half_width_hint[k] / ax.scale;
    if (!(wx[k] > 0.0)) throw FitError("half-width hints must be positive");
  }

  FixedCenterFit out;
  out.centers.assign(centers.begin(), centers.end());
  out.height = Eigen::MatrixXd::Zero(n_ions, n_modes);
  out.height_error = Eigen::MatrixXd::Zero(n_ions, n_modes);
  out.half_width = Eigen::MatrixXd::Zero(n_ions, n_modes);
  out.offset = Eigen::VectorXd::Zero(n_ions);
  out.converged.assign(static_cast<std::size_t>(n_ions), false);

  // A common amplitude scale keeps heights comparable across ions.
  const double ymax = amplitudes.maxCoeff();
  if (!(ymax > 0.0)) throw FitError("all-zero amplitudes cannot be fitted");

  for (Eigen::Index ion = 0; ion < n_ions; ++ion) {
    std::vector<double> y(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) y[static_cast<std::size_t>(i)] = amplitudes(i, ion) / ymax;
    const double offset0 = detail::percentile(y, 0.10);

    const Eigen::Index np = 2 * n_modes + 1;
    Eigen::VectorXd p0(np), lower(np), upper(np);
    for (Eigen::Index k = 0; k < n_modes; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const auto nearest = static_cast<std::size_t>(
          std::min_element(x.begin(), x.end(), [&](double a, double b) {
            return std::abs(a - cx[kk]) < std::abs(b - cx[kk]);
          }) - x.begin());
      lower.segment<2>(2 * k) << options.half_width_lower_factor * wx[kk], 0.0;
      upper.segment<2>(2 * k) << options.half_width_upper_factor * wx[kk], 10.0;
      p0.segment<2>(2 * k) << wx[kk], std::max(y[nearest] - offset0, 0.0);
    }
    p0(np - 1) = offset0;
    lower(np - 1) = 0.0;
    upper(np - 1) = 10.0;

    auto residual = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd r(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        double v = p(np - 1);
        for (Eigen::Index k = 0; k < n_modes; ++k)
          v += detail::lorentz(xi, cx[static_cast<std::size_t>(k)], p(2 * k), p(2 * k + 1)).value;
        r(i) = v - y[static_cast<std::size_t>(i)];
      }
      return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
      Eigen::MatrixXd j(m, np);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < n_modes; ++k) {
          const auto t = detail::lorentz(xi, cx[static_cast<std::size_t>(k)], p(2 * k), p(2 * k + 1));
          j(i, 2 * k) = t.d_width;
          j(i, 2 * k + 1) = t.d_height;
        }
        j(i, np - 1) = 1.0;
      }
      return j;
    };

    const LevMarResult fit = levenberg_marquardt(residual, jacobian, p0, lower, upper, options.levmar);
    out.converged[static_cast<std::size_t>(ion)] = fit.converged;
    for (Eigen::Index k = 0; k < n_modes; ++k) {
      out.half_width(ion, k) = ax.scale * fit.params(2 * k);
      out.height(ion, k) = ymax * fit.params(2 * k + 1);
      out.height_error(ion, k) = ymax * fit.standard_errors(2 * k + 1);
    }
    out.offset(ion) = ymax * fit.params(np - 1);
  }
  return out;
}

// Complex response interpolated linearly between the two scan points that
// bracket `omega`; the argument gives the phase there.
inline double phase_at(const Spectrum& spectrum, Eigen::Index ion, double omega) {
  const auto& w = spectrum.omega_d;
  if (w.empty()) throw FitError("empty spectrum");
  auto it = std::lower_bound(w.begin(), w.end(), omega);
  if (it == w.begin()) return spectrum.phase(0, ion);
  if (it == w.end()) return spectrum.phase(static_cast<Eigen::Index>(w.size() - 1), ion);
  const auto hi = static_cast<Eigen::Index>(it - w.begin());
  const Eigen::Index lo = hi - 1;
  const double t = (omega - w[static_cast<std::size_t>(lo)]) /
                   (w[static_cast<std::size_t>(hi)] - w[static_cast<std::size_t>(lo)]);
  const auto z = (1.0 - t) * std::polar(spectrum.amplitude(lo, ion), spectrum.phase(lo, ion)) +
                 t * std::polar(spectrum.amplitude(hi, ion), spectrum.phase(hi, ion));
  return std::arg(z);
}

// (ion, mode) matrix of phases at the given centers.
inline Eigen::MatrixXd phases_at_centers(const Spectrum& spectrum, std::span<const double> centers) {
  const Eigen::Index n_ions = spectrum.amplitude.cols();
  Eigen::MatrixXd out(n_ions, static_cast<Eigen::Index>(centers.size()));
  for (Eigen::Index i = 0; i < n_ions; ++i)
    for (std::size_t k = 0; k < centers.size(); ++k)
      out(i, static_cast<Eigen::Index>(k)) = phase_at(spectrum, i, centers[k]);
  return out;
}

struct EigenvectorEstimate {
  Eigen::MatrixXd components;      // (ion, mode), unit columns
  Eigen::MatrixXd standard_error;  // (ion, mode)
  std::vector<double> center_frequency;
  std::vector<std::string> warnings;
};

inline constexpr double kAmbiguousPhaseMargin = 0.2;

// Components are heights normalized per mode; ion i gets a minus sign when
// its phase differs from the strongest ion's by more than pi/2.
inline EigenvectorEstimate reconstruct_eigenvectors(const Eigen::MatrixXd& height,
                                                    const Eigen::MatrixXd& phase,
                                                    std::span<const double> centers = {},
                                                    const Eigen::MatrixXd& height_error = {}) {
  if (height.rows() != phase.rows() || height.cols() != phase.cols()) {
    throw FitError("height and phase matrices differ in shape");
  }
  if ((height.array() < 0.0).any()) throw FitError("heights must be non-negative");
  const Eigen::Index n_ions = height.rows(), n_modes = height.cols();
  const bool have_errors = height_error.rows() == n_ions && height_error.cols() == n_modes;
  const double pi = std::numbers::pi;

  EigenvectorEstimate out;
  out.components = Eigen::MatrixXd::Zero(n_ions, n_modes);
  out.standard_error = Eigen::MatrixXd::Zero(n_ions, n_modes);
  out.center_frequency.assign(centers.begin(), centers.end());

  for (Eigen::Index k = 0; k < n_modes; ++k) {
    const Eigen::VectorXd h = height.col(k);
    const double norm = h.norm();
    if (!(norm > 0.0)) throw FitError("mode " + std::to_string(k) + " has zero total height");
    Eigen::Index ref = 0;
    h.maxCoeff(&ref);

    Eigen::VectorXd v(n_ions);
    for (Eigen::Index i = 0; i < n_ions; ++i) {
      const double d = std::abs(detail::wrap_phase(phase(i, k) - phase(ref, k)));
      if (i != ref && std::abs(d - pi / 2.0) < kAmbiguousPhaseMargin) {
        out.warnings.push_back("mode " + std::to_string(k) + ", ion " + std::to_string(i) +
                               ": relative phase within 0.2 rad of pi/2, sign ambiguous");
      }
      v(i) = (d < pi / 2.0 ? 1.0 : -1.0) * h(i) / norm;
    }
    apply_sign_convention(v);
    out.components.col(k) = v;

    if (have_errors) {
      // Linear propagation through v = h / |h|.
      for (Eigen::Index i = 0; i < n_ions; ++i) {
        double var = 0.0;
        for (Eigen::Index j = 0; j < n_ions; ++j) {
          const double dvdh = (i == j ? 1.0 / norm : 0.0) - h(i) * h(j) / (norm * norm * norm);
          var += dvdh * dvdh * height_error(j, k) * height_error(j, k);
        }
        out.standard_error(i, k) = std::sqrt(var);
      }
    }
  }
  return out;
}

}  // namespace tapermode
