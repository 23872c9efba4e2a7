#include "mfp/lq.hpp"

#include <cmath>

#include "doctest.h"
#include "mfp/errors.hpp"

using namespace mfp;

namespace {

LqParams fixture_params() { return LqParams{0.0, 1.0, 0.5, 0.3, 0.1, 0.4, 0.3, 1.0, 1.0}; }

EmpiricalMeasure gate_measure(const NoiseField& rng, std::uint32_t stream, std::size_t n = 16) {
  std::vector<double> atoms(n);
  for (std::size_t i = 0; i < n; ++i)
    atoms[i] = 0.5 + 1.5 * rng.normal(NoiseField::kKindProbe, stream, 7, static_cast<std::uint32_t>(i));
  return EmpiricalMeasure(atoms, 1);
}

}  // namespace

TEST_CASE("zero running and terminal cost give the zero Riccati solution") {
  const auto sol = solve_riccati(LqParams{0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.3, 1.0, 1.0}, 512);
  for (const double t : {0.0, 0.25, 0.8, 1.0}) {
    CHECK(sol.coef_K(t) == 0.0);
    CHECK(sol.coef_L(t) == 0.0);
    CHECK(sol.coef_chi(t) == 0.0);
  }
}

TEST_CASE("q=1, g=0 integrates to the tanh solution") {
  // K' = K^2 - 1, K(1) = 0 has K(t) = tanh(1 - t)
  const auto sol = solve_riccati(LqParams{0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0}, 1024);
  CHECK(std::abs(sol.coef_K(0.0) - std::tanh(1.0)) <= 1e-9);
  for (const double t : {0.1, 0.37, 0.52, 0.9})
    CHECK(std::abs(sol.coef_K(t) - std::tanh(1.0 - t)) <= 1e-9);
}

TEST_CASE("RK4 self-convergence: halving the grid moves K(0), L(0) below 1e-9") {
  const auto coarse = solve_riccati(fixture_params(), 1024);
  const auto fine = solve_riccati(fixture_params(), 2048);
  CHECK(std::abs(coarse.coef_K(0.0) - fine.coef_K(0.0)) <= 1e-9);
  CHECK(std::abs(coarse.coef_L(0.0) - fine.coef_L(0.0)) <= 1e-9);
  CHECK(std::abs(coarse.coef_chi(0.0) - fine.coef_chi(0.0)) <= 1e-9);
}

TEST_CASE("sigma = 0 collapses c_N onto chi for every N") {
  LqParams p = fixture_params();
  p.sigma = 0.0;
  const auto sol = solve_riccati(p, 512);
  for (const double t : {0.0, 0.3, 0.77})
    for (const std::size_t n : {1u, 4u, 64u}) CHECK(sol.coef_cN(t, n) == sol.coef_chi(t));
}

TEST_CASE("terminal values are taken exactly") {
  const auto sol = solve_riccati(fixture_params(), 512);
  CHECK(sol.coef_K(1.0) == fixture_params().g);
  CHECK(sol.coef_L(1.0) == fixture_params().gbar);
  CHECK(sol.coef_chi(1.0) == 0.0);
  CHECK(sol.coef_cN(1.0, 8) == 0.0);
  CHECK(sol.integral_L(1.0) == 0.0);
  CHECK_THROWS_AS(sol.coef_K(-0.01), UsageError);
  CHECK_THROWS_AS(sol.coef_K(1.01), UsageError);
}

TEST_CASE("Riccati blow-up raises a horizon error naming the blow-up time") {
  // K' = K^2, K(1) = -2 explodes at t = 1 - 1/2
  try {
    solve_riccati(LqParams{0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 1.0, 1.0}, 4096);
    FAIL("expected HorizonError");
  } catch (const HorizonError& e) {
    CHECK(e.blow_up_time > 0.4);
    CHECK(e.blow_up_time < 0.6);
  }
  CHECK_THROWS_AS(solve_riccati(fixture_params(), 100), UsageError);  // grid too coarse
}

TEST_CASE("integral of L matches an independent quadrature of the interpolant") {
  const auto sol = solve_riccati(fixture_params(), 1024);
  for (const double t : {0.0, 0.21, 0.6}) {
    // composite Simpson on [t, T]
    const std::size_t cells = 512;
    const double h = (1.0 - t) / static_cast<double>(cells);
    double acc = sol.coef_L(t) + sol.coef_L(1.0);
    for (std::size_t j = 1; j < cells; ++j)
      acc += (j % 2 ? 4.0 : 2.0) * sol.coef_L(t + h * static_cast<double>(j));
    acc *= h / 3.0;
    CHECK(std::abs(sol.integral_L(t) - acc) <= 1e-9);
    // c_N - chi = sigma^2/N * integral_L by the same token
    const double sigma2 = 0.16;
    CHECK(std::abs((sol.coef_cN(t, 8) - sol.coef_chi(t)) - sigma2 * acc / 8.0) <= 1e-9);
  }
}

TEST_CASE("value evaluators: zero coefficients give the zero function") {
  const auto sol = solve_riccati(LqParams{0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.3, 1.0, 1.0}, 512);
  const EmpiricalMeasure mu(std::vector<double>{1.0, -2.0, 0.5}, 1);
  CHECK(sol.v(0.4, mu) == 0.0);
  CHECK(sol.dmu_v(0.4, mu, 1.7) == 0.0);
  CHECK(sol.dx_dmu_v(0.4) == 0.0);
  CHECK(sol.d2mu_v(0.4) == 0.0);
}

TEST_CASE("N * grad_vN equals dmu_v at the lifted measure (shared coefficients)") {
  const auto sol = solve_riccati(fixture_params(), 1024);
  const NoiseField rng(51);
  const std::size_t n = 8;
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i)
    xs[i] = rng.normal(NoiseField::kKindProbe, 1, 0, static_cast<std::uint32_t>(i));
  const EmpiricalMeasure mu(xs, 1);
  for (const double t : {0.0, 0.33, 0.9})
    for (std::size_t i = 0; i < n; ++i)
      CHECK(static_cast<double>(n) * sol.grad_v_n(t, xs, i) == sol.dmu_v(t, mu, xs[i]));
}

TEST_CASE("dmu_v matches central differences of v under atom perturbation") {
  const auto sol = solve_riccati(fixture_params(), 1024);
  const NoiseField rng(53);
  const std::size_t n = 8;
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i)
    xs[i] = 0.5 + rng.normal(NoiseField::kKindProbe, 2, 0, static_cast<std::uint32_t>(i));
  const double h = 1e-4;
  for (const double t : {0.15, 0.6}) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> up = xs, down = xs;
      up[i] += h;
      down[i] -= h;
      const double fd =
          (sol.v(t, EmpiricalMeasure(up, 1)) - sol.v(t, EmpiricalMeasure(down, 1))) / (2.0 * h);
      CHECK(std::abs(static_cast<double>(n) * fd - sol.dmu_v(t, EmpiricalMeasure(xs, 1), xs[i])) <=
            1e-5);
    }
  }
}

TEST_CASE("pde residual vanishes for the zero-cost instance") {
  const auto sol = solve_riccati(LqParams{0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.3, 1.0, 1.0}, 512);
  const EmpiricalMeasure mu(std::vector<double>{0.3, -1.2, 2.0}, 1);
  CHECK(pde_residual(sol, 0.5, mu) <= 1e-15);
}

TEST_CASE("acceptance fixture passes the residual gate") {
  const auto sol = solve_riccati(fixture_params(), 1024);
  const auto gate = riccati_residual_gate(sol);
  CHECK(gate.pass);
  CHECK(gate.max_pde_residual <= 1e-6);
  CHECK(gate.max_finite_dim_residual <= 1e-6);
}

TEST_CASE("corrupted ODE integration fails the residual gate") {
  const auto sol = solve_riccati(fixture_params(), 1024, RiccatiOptions{true});
  const auto gate = riccati_residual_gate(sol);
  CHECK_FALSE(gate.pass);
  CHECK(gate.max_pde_residual > 1e-3);
}

TEST_CASE("pde residual also holds with a non-unit control weight") {
  LqParams p = fixture_params();
  p.control_weight = 2.0;
  const auto sol = solve_riccati(p, 1024);
  const NoiseField rng(57);
  for (std::uint32_t s = 0; s < 5; ++s) {
    const auto mu = gate_measure(rng, s);
    for (const double t : {0.2, 0.5, 0.8}) CHECK(pde_residual(sol, t, mu) <= 1e-6);
  }
}

TEST_CASE("rate witness: vN - v is constant in the configuration") {
  const auto sol = solve_riccati(fixture_params(), 1024);
  const NoiseField rng(59);
  const std::size_t n = 16;
  for (const double t : {0.0, 0.4, 0.95}) {
    const double reference = sol.coef_cN(t, n) - sol.coef_chi(t);
    for (std::uint32_t s = 0; s < 5; ++s) {
      const auto mu = gate_measure(rng, 100 + s, n);
      std::vector<double> xs(mu.flat().begin(), mu.flat().end());
      const double witness = sol.v_n(t, xs) - sol.v(t, mu);
      CHECK(witness == doctest::Approx(reference).epsilon(1e-10));
    }
    CHECK(reference == doctest::Approx(0.16 * sol.integral_L(t) / 16.0).epsilon(1e-12));
  }
}

TEST_CASE("make_lq_model wires the analytic solution to the riccati coefficients") {
  const auto model = make_lq_model(fixture_params(), AffineDrift{0.0, -0.2, 0.1},
                                   GaussianLaw{0.5, 0.25}, 1024);
  const NoiseField rng(61);
  const auto mu = gate_measure(rng, 3);
  const double t = 0.35;
  CHECK(model.solution.v(t, mu) == model.riccati->v(t, mu));
  // moment-form evaluation agrees with the empirical evaluation
  CHECK(model.solution.v_on_moments(t, mu.mean(), mu.second_moment()) ==
        doctest::Approx(model.riccati->v(t, mu)).epsilon(1e-14));
  std::vector<double> out(1);
  const double x = 0.8;
  model.solution.dmu_v(t, mu, std::span<const double>(&x, 1), out);
  CHECK(out[0] == model.riccati->dmu_v(t, mu, x));
  model.solution.dmu_v_on_moments(t, mu.mean(), std::span<const double>(&x, 1), out);
  CHECK(out[0] == doctest::Approx(model.riccati->dmu_v(t, mu, x)).epsilon(1e-14));
  // Assumption-1 growth constant observed finite
  const double growth = observed_growth_constant(model.solution, 1, 1.0, 32, rng);
  CHECK(std::isfinite(growth));
  CHECK(growth > 0.0);
  CHECK(growth < 10.0);
}
