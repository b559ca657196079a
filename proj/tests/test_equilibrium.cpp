#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "tapermode/equilibrium.hpp"

using namespace tapermode;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Cyclic coordinate descent with golden-section line searches, each ion kept
// between its neighbours. Slow but shares nothing with the Newton solver.
std::vector<double> coordinate_descent(int n, int sweeps) {
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = 1.5 * (i - 0.5 * (n - 1));
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int s = 0; s < sweeps; ++s) {
    for (int i = 0; i < n; ++i) {
      double a = i > 0 ? u[i - 1] + 1e-6 : u[i] - 10.0;
      double b = i + 1 < n ? u[i + 1] - 1e-6 : u[i] + 10.0;
      auto f = [&](double x) {
        std::vector<double> t = u;
        t[i] = x;
        return axial::energy(t);
      };
      double c = b - phi * (b - a), d = a + phi * (b - a);
      double fc = f(c), fd = f(d);
      for (int k = 0; k < 200 && b - a > 1e-14; ++k) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - phi * (b - a);
          fc = f(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + phi * (b - a);
          fd = f(d);
        }
      }
      u[i] = 0.5 * (a + b);
    }
  }
  return u;
}

}  // namespace

TEST_CASE("single ion sits at the origin", "[equilibrium]") {
  TrapConfig c;
  c.n_ions = 1;
  const EquilibriumResult eq = solve_equilibrium(c);
  REQUIRE(eq.u.size() == 1);
  CHECK(eq.u[0] == 0.0);
  CHECK(eq.converged);
}

TEST_CASE("two ions: closed form", "[equilibrium]") {
  TrapConfig c;
  c.n_ions = 2;
  const EquilibriumResult eq = solve_equilibrium(c);
  const double expected = std::pow(0.5, 2.0 / 3.0);
  CHECK_THAT(eq.u[0], WithinAbs(-expected, 1e-12));
  CHECK_THAT(eq.u[1], WithinAbs(expected, 1e-12));
}

TEST_CASE("three ions: closed form and coordinate-descent oracle", "[equilibrium]") {
  TrapConfig c;
  const EquilibriumResult eq = solve_equilibrium(c);
  const double expected = std::cbrt(1.25);
  CHECK_THAT(eq.u[0], WithinAbs(-expected, 1e-12));
  CHECK_THAT(eq.u[1], WithinAbs(0.0, 1e-12));
  CHECK_THAT(eq.u[2], WithinAbs(expected, 1e-12));
  CHECK_THAT(eq.u[2], WithinAbs(1.0772, 1e-4));

  const std::vector<double> oracle = coordinate_descent(3, 400);
  for (int i = 0; i < 3; ++i) CHECK_THAT(eq.u[i], WithinAbs(oracle[i], 1e-6));

  const double lambda = effective_radial_frequencies(c).length_scale;
  CHECK_THAT(eq.z0[2], WithinRel(expected * lambda, 1e-12));
}

TEST_CASE("longer chains agree with the oracle and are mirror symmetric", "[equilibrium]") {
  for (int n : {4, 5, 7}) {
    TrapConfig c;
    c.n_ions = n;
    const EquilibriumResult eq = solve_equilibrium(c);
    const std::vector<double> oracle = coordinate_descent(n, 3000);
    for (int i = 0; i < n; ++i) {
      CHECK_THAT(eq.u[i], WithinAbs(oracle[i], 1e-5));
      CHECK_THAT(eq.u[i], WithinAbs(-eq.u[n - 1 - i], 1e-12));
    }
    CHECK(axial::gradient(eq.u).norm() < 1e-12);
  }
}

TEST_CASE("larger chains converge", "[equilibrium]") {
  for (int n : {10, 15, 20}) {
    TrapConfig c;
    c.n_ions = n;
    const EquilibriumResult eq = solve_equilibrium(c);
    CHECK(eq.converged);
    CHECK(equilibrium_stability_check(eq).stable);
  }
}

TEST_CASE("dimensionless positions do not depend on wz or the taper", "[equilibrium]") {
  TrapConfig a;
  TrapConfig b;
  b.omega_z = hz_to_angular(205e3);
  TrapConfig d;
  d.funnel_length = FunnelLength::infinite();
  const auto ua = solve_equilibrium(a).u;
  const auto ub = solve_equilibrium(b).u;
  const auto ud = solve_equilibrium(d).u;
  for (std::size_t i = 0; i < ua.size(); ++i) {
    CHECK_THAT(ub[i], WithinAbs(ua[i], 1e-13));
    CHECK(ud[i] == ua[i]);
  }
  // lambda^3 ~ 1 / wz^2
  const EquilibriumResult eb = solve_equilibrium(b);
  const EquilibriumResult ea = solve_equilibrium(a);
  CHECK_THAT(eb.length_scale / ea.length_scale, WithinRel(std::cbrt(std::pow(100.0 / 205.0, 2)), 1e-12));
}

TEST_CASE("stability report and chain positions", "[equilibrium]") {
  TrapConfig c;
  const EquilibriumResult eq = solve_equilibrium(c);
  const StabilityReport s = equilibrium_stability_check(eq);
  CHECK(s.stable);
  // axial Hessian eigenvalues for three ions: 1, 3, 29/5
  CHECK_THAT(s.smallest_eigenvalue, WithinAbs(1.0, 1e-12));
  const Positions r = chain_positions(eq);
  CHECK(r.rows() == 3);
  CHECK(r.col(0).norm() == 0.0);
  CHECK(r(2, 2) == eq.z0[2]);
}

TEST_CASE("iteration budget and invalid input", "[equilibrium]") {
  TrapConfig c;
  c.n_ions = 8;
  EquilibriumOptions tight;
  tight.max_iterations = 1;
  CHECK_THROWS_AS(solve_equilibrium(c, tight), NonConvergenceError);
  tight = {};
  tight.tolerance = 0.0;
  CHECK_THROWS_AS(solve_equilibrium(c, tight), ConfigError);
  TrapConfig bad;
  bad.omega_z = 10 * bad.omega_x0;
  CHECK_THROWS_AS(solve_equilibrium(bad), ConfigError);
}
