#include "mfp/sim.hpp"

#include <cmath>

#include "doctest.h"
#include "mfp/analysis.hpp"
#include "mfp/errors.hpp"
#include "mfp/lq.hpp"

using namespace mfp;

namespace {

// scalar model with plain-function coefficients and a fixed initial point
ModelSpec scalar_spec(double (*drift)(double, double), double (*vol)(double),
                      double (*vol0)(double), double x0, double horizon = 1.0) {
  ModelSpec spec;
  spec.d = spec.n = spec.m = 1;
  spec.horizon_T = horizon;
  spec.drift_b = [drift](double t, std::span<const double> x, const EmpiricalMeasure&,
                         std::span<double> out) { out[0] = drift(t, x[0]); };
  spec.vol_sigma = [vol](double, std::span<const double> x, const EmpiricalMeasure&,
                         std::span<double> out) { out[0] = vol(x[0]); };
  spec.vol_sigma0 = [vol0](double, std::span<const double> x, const EmpiricalMeasure&,
                           std::span<double> out) { out[0] = vol0(x[0]); };
  spec.driver_H = [](double, std::span<const double>, const EmpiricalMeasure&, double,
                     std::span<const double>) { return 0.0; };
  spec.driver_Hb = spec.driver_H;
  spec.terminal_G = [](const EmpiricalMeasure&) { return 0.0; };
  spec.mu0_sampler = [x0](std::size_t count, const InitNoise&, std::span<double> out) {
    for (std::size_t i = 0; i < count; ++i) out[i] = x0;
  };
  return spec;
}

LqModel fixture_model() {
  return make_lq_model(LqParams{0.0, 1.0, 0.5, 0.3, 0.1, 0.4, 0.3, 1.0, 1.0},
                       AffineDrift{0.0, -0.2, 0.1}, GaussianLaw{0.5, 0.25}, 1024);
}

}  // namespace

TEST_CASE("zero coefficients freeze the particles") {
  const auto spec = scalar_spec([](double, double) { return 0.0; }, [](double) { return 0.0; },
                                [](double) { return 0.0; }, 1.25);
  const auto paths = simulate_particles(spec, 3, 16, 7);
  for (std::size_t k = 0; k <= 16; ++k)
    for (std::size_t i = 0; i < 3; ++i) CHECK(paths.state(k, i)[0] == 1.25);
}

TEST_CASE("noiseless driftless lq instance keeps the particles at their initial draws") {
  const auto model = make_lq_model(LqParams{0.0, 1.0, 0.5, 0.3, 0.1, 0.0, 0.0, 1.0, 1.0},
                                   AffineDrift{0.0, 0.0, 0.0}, GaussianLaw{0.5, 0.25}, 512);
  const auto paths = simulate_particles(model.spec, 4, 16, 11);
  for (std::size_t k = 1; k <= 16; ++k)
    for (std::size_t i = 0; i < 4; ++i) CHECK(paths.state(k, i)[0] == paths.state(0, i)[0]);
}

TEST_CASE("unit drift without noise is the exact ODE") {
  const auto spec = scalar_spec([](double, double) { return 1.0; }, [](double) { return 0.0; },
                                [](double) { return 0.0; }, 0.5);
  const auto paths = simulate_particles(spec, 2, 16, 7);
  CHECK(paths.state(16, 0)[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(paths.state(16, 1)[0] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("strong order one half against the geometric closed form") {
  // dX = 0.05 X dt + 0.2 X dW, X_0 = 1; X_T = exp((0.05 - 0.02) T + 0.2 W_T)
  const auto spec = scalar_spec([](double, double x) { return 0.05 * x; },
                                [](double x) { return 0.2 * x; }, [](double) { return 0.0; }, 1.0);
  std::vector<std::pair<double, double>> points;
  for (const std::size_t steps : {16u, 32u, 64u, 128u, 256u}) {
    const auto paths = simulate_particles(spec, 64, steps, 12345);
    double sq = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      double w_T = 0.0;
      for (std::size_t k = 0; k < steps; ++k) w_T += paths.delta_w(k, i)[0];
      const double exact = std::exp(0.03 + 0.2 * w_T);
      const double diff = paths.state(steps, i)[0] - exact;
      sq += diff * diff;
    }
    points.emplace_back(static_cast<double>(steps), std::sqrt(sq / 64.0));
  }
  const RateFit fit = fit_rate(points);
  CHECK(-fit.slope >= 0.4);
  CHECK(-fit.slope <= 0.6);
}

TEST_CASE("exchangeability: permuting streams permutes trajectories bitwise") {
  const auto model = fixture_model();
  const std::size_t n = 5, steps = 8;
  const auto base = simulate_particles(model.spec, n, steps, 99);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<std::uint32_t> streams(n);
  for (std::size_t i = 0; i < n; ++i) streams[i] = base.stream_ids[perm[i]];
  const auto permuted = simulate_particles(model.spec, n, steps, 99, streams);
  for (std::size_t k = 0; k <= steps; ++k)
    for (std::size_t i = 0; i < n; ++i)
      CHECK(permuted.state(k, i)[0] == base.state(k, perm[i])[0]);
}

TEST_CASE("common noise alone keeps equal particles equal") {
  const auto spec = scalar_spec([](double, double x) { return -x; }, [](double) { return 0.0; },
                                [](double) { return 1.0; }, 0.7);
  const auto paths = simulate_particles(spec, 6, 32, 5);
  for (std::size_t k = 0; k <= 32; ++k)
    for (std::size_t i = 1; i < 6; ++i) CHECK(paths.state(k, i)[0] == paths.state(k, 0)[0]);
  // and the trajectory actually moves
  CHECK(paths.state(32, 0)[0] != 0.7);
}

TEST_CASE("determinism: repeated runs and batch path zero") {
  const auto model = fixture_model();
  const auto a = simulate_particles(model.spec, 4, 16, 2024);
  const auto b = simulate_particles(model.spec, 4, 16, 2024);
  CHECK(a.states == b.states);
  CHECK(a.dw == b.dw);
  CHECK(a.dw0 == b.dw0);

  const auto batch1 = simulate_batch(model.spec, 4, 6, 16, 2024, 1);
  const auto batch2 = simulate_batch(model.spec, 4, 6, 16, 2024, 2);
  CHECK(batch1.states == batch2.states);
  CHECK(batch1.dw0 == batch2.dw0);

  // path 0 of a batch uses the same addresses as the single run
  for (std::size_t k = 0; k <= 16; ++k)
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(batch1.state(k, 0, i)[0] == a.state(k, i)[0]);
  // regenerated increments match the stored ones of the single run
  std::vector<double> dw(1);
  for (std::size_t k = 0; k < 16; ++k)
    for (std::size_t i = 0; i < 4; ++i) {
      batch1.delta_w(k, 0, i, dw);
      CHECK(dw[0] == a.delta_w(k, i)[0]);
    }
}

TEST_CASE("increment variance matches the step size") {
  const auto model = fixture_model();
  const auto paths = simulate_particles(model.spec, 32, 64, 31415);
  double s = 0.0, sq = 0.0;
  for (const double w : paths.dw) {
    s += w;
    sq += w * w;
  }
  const double count = static_cast<double>(paths.dw.size());
  const double var = sq / count - (s / count) * (s / count);
  CHECK(var == doctest::Approx(1.0 / 64.0).epsilon(0.05));
}

TEST_CASE("blow-up aborts with the step and particle id") {
  const auto spec = scalar_spec([](double, double x) { return 1e30 * x; },
                                [](double) { return 0.0; }, [](double) { return 0.0; }, 1.0);
  try {
    simulate_particles(spec, 2, 32, 1);
    FAIL("expected BlowUpError");
  } catch (const BlowUpError& e) {
    CHECK(e.step < 32);
  }
}

TEST_CASE("moment monitor") {
  const auto frozen = scalar_spec([](double, double) { return 0.0; }, [](double) { return 0.0; },
                                  [](double) { return 0.0; }, 0.0);
  CHECK(moment_monitor(simulate_particles(frozen, 4, 8, 1), 4) == 0.0);

  const auto fixed = scalar_spec([](double, double) { return 0.0; }, [](double) { return 0.0; },
                                 [](double) { return 0.0; }, 2.0);
  // |X|^2 = N * 4 at every node
  CHECK(moment_monitor(simulate_particles(fixed, 3, 8, 1), 2) == 12.0);
  CHECK(moment_monitor(simulate_particles(fixed, 3, 8, 1), 4) == 144.0);
  CHECK_THROWS_AS(moment_monitor(simulate_particles(fixed, 3, 8, 1), 3), UsageError);

  // stability across grid refinement on the fixture
  const auto model = fixture_model();
  const double m64 = moment_monitor(simulate_particles(model.spec, 16, 64, 7), 4);
  const double m256 = moment_monitor(simulate_particles(model.spec, 16, 256, 7), 4);
  CHECK(std::isfinite(m64));
  CHECK(m64 / m256 < 2.0);
  CHECK(m256 / m64 < 2.0);
}

TEST_CASE("limit paths: frozen dynamics keep the descriptor constant") {
  auto model = make_lq_model(LqParams{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0},
                             AffineDrift{0.0, 0.0, 0.0}, GaussianLaw{0.4, 0.0}, 512);
  const std::vector<double> dw0(16, 0.0);
  const auto limit = simulate_limit(model.spec, 8, 16, 3, dw0);
  for (std::size_t k = 0; k <= 16; ++k) {
    CHECK(limit.cond_mean[k] == 0.4);
    CHECK(limit.cond_var[k] == 0.0);
  }
}

TEST_CASE("limit paths: linear decay of the conditional mean") {
  auto model = make_lq_model(LqParams{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0},
                             AffineDrift{0.0, -1.0, 0.0}, GaussianLaw{1.0, 0.0}, 512);
  const std::size_t steps = 256;
  const std::vector<double> dw0(steps, 0.0);
  const auto limit = simulate_limit(model.spec, 4, steps, 3, dw0);
  CHECK(std::abs(limit.cond_mean[steps] - std::exp(-1.0)) <= 2.0 / static_cast<double>(steps));
}

TEST_CASE("limit descriptor tracks a large-particle proxy mean") {
  const auto model = fixture_model();
  const std::size_t n = 10000, steps = 64;
  const auto paths = simulate_particles(model.spec, n, steps, 17);
  const auto limit = simulate_limit(model.spec, 64, steps, 17, paths.dw0);
  double worst = 0.0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const EmpiricalMeasure mu(paths.step_states(k), 1);
    worst = std::max(worst, std::abs(mu.mean()[0] - limit.cond_mean[k]));
  }
  CHECK(worst <= 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("limit simulation requires the affine structure") {
  auto spec = scalar_spec([](double, double x) { return x * x; }, [](double) { return 1.0; },
                          [](double) { return 0.0; }, 0.0);
  const std::vector<double> dw0(8, 0.0);
  CHECK_THROWS_AS(simulate_limit(spec, 4, 8, 1, dw0), UnsupportedModelError);
  const auto model = fixture_model();
  const std::vector<double> wrong_len(7, 0.0);
  CHECK_THROWS_AS(simulate_limit(model.spec, 4, 8, 1, wrong_len), UsageError);
}

TEST_CASE("limit copies couple to the particle run noises") {
  const auto model = fixture_model();
  const std::size_t n = 8, steps = 16;
  const auto paths = simulate_particles(model.spec, n, steps, 4242);
  const auto limit = simulate_limit(model.spec, n, steps, 4242, paths.dw0);
  // identical initial draws (same streams, same seed)
  for (std::size_t i = 0; i < n; ++i) CHECK(limit.states[i] == paths.state(0, i)[0]);
}
