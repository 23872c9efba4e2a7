// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "lq_discrete_oracle.hpp"
#include "mfp/analysis.hpp"
#include "mfp/bsde.hpp"
#include "mfp/lq.hpp"
#include "mfp/sweep.hpp"

using namespace mfp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

LqModel fixture_model() {
  return make_lq_model(LqParams{0.0, 1.0, 0.5, 0.3, 0.1, 0.4, 0.3, 1.0, 1.0},
                       AffineDrift{0.0, -0.2, 0.1}, GaussianLaw{0.5, 0.25}, 1024);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string body_of(const fs::path& p) {
  std::ifstream in(p);
  std::string line, body;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') body += line + "\n";
  return body;
}

// ---------------------------------------------------------------------------
Outcome criterion1_riccati_gate() {
  const auto model = fixture_model();
  const auto gate = riccati_residual_gate(*model.riccati);
  Outcome out;
  out.pass = gate.pass;
  out.detail = "max pde residual " + fmt(gate.max_pde_residual) + ", max finite-dim residual " +
               fmt(gate.max_finite_dim_residual) + ", tol 1e-6";
  return out;
}

// ---------------------------------------------------------------------------
Outcome criterion2_exact_rate() {
  const auto model = fixture_model();
  std::vector<std::pair<double, double>> points;
  std::vector<double> scaled;
  double worst_z = 0.0;
  for (const std::size_t n : {4u, 8u, 16u, 32u, 64u}) {
    const auto paths = simulate_particles(model.spec, n, 64, 1);
    const auto back = evaluate_analytic(model.solution, paths);
    const auto pe = pathwise_errors(back, model.solution, paths);
    points.emplace_back(static_cast<double>(n), pe.err_y_sup);
    scaled.push_back(static_cast<double>(n) * pe.err_y_sup);
    worst_z = std::max(worst_z, pe.err_z_int);
  }
  const RateFit fit = fit_rate(points);
  const double lo = *std::min_element(scaled.begin(), scaled.end());
  const double hi = *std::max_element(scaled.begin(), scaled.end());
  double mean_scaled = 0.0;
  for (const double s : scaled) mean_scaled += s;
  mean_scaled /= static_cast<double>(scaled.size());
  const double spread = (hi - lo) / mean_scaled;

  Outcome out;
  const bool slope_ok = fit.slope >= -1.0005 && fit.slope <= -0.9995;
  const bool r2_ok = fit.r2 >= 0.999999;
  const bool spread_ok = spread <= 1e-6;
  const bool z_ok = worst_z <= 1e-10;
  out.pass = slope_ok && r2_ok && spread_ok && z_ok;
  out.detail = "slope " + fmt(fit.slope) + ", r2-1 " + fmt(fit.r2 - 1.0) + ", N*err spread " +
               fmt(spread) + ", max err_z " + fmt(worst_z);
  return out;
}

// ---------------------------------------------------------------------------
// Exact infinite-sample limit of the backward recursion: sup_t |Y_disc - v|
// along the fixture path, for one (N, K). Measures the scheme's dt bias with
// the 1/N signal riding on top, free of any regression noise.
double scheme_limit_error(const LqModel& model, std::size_t n, std::size_t steps) {
  const auto coeffs =
      mfp::testing::lsmc_exact_limit(model.params, model.drift, n, steps);
  const auto paths = simulate_particles(model.spec, n, steps, 1);
  double sup = 0.0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const EmpiricalMeasure mu(paths.step_states(k), 1);
    const double y_disc =
        mfp::testing::eval_quad(coeffs[k], mu.second_moment(), mu.mean()[0]);
    sup = std::max(sup, std::abs(y_disc - model.riccati->v(paths.times[k], mu)));
  }
  return sup;
}

Outcome criterion3_lsmc_rate() {
  auto cfg = parse_config(R"({
    "experiment": "lsmc-rate",
    "N": [4, 8, 16, 32],
    "seeds": [1, 2, 3, 4, 5, 6, 7, 8],
    "K": 64, "P": 16384,
    "method": "lsmc",
    "basis": ["1", "xbar", "xbar2", "m2"]
  })");
  const fs::path dir = "acceptance-out/criterion3";
  fs::remove_all(dir);
  std::ostringstream log;
  const auto result = run_sweep(cfg, dir.string(), false, log);
  // seed-median per N
  std::vector<std::pair<double, double>> points;
  std::string medians;
  for (const std::size_t n : cfg.n_list) {
    std::vector<double> vals;
    for (const auto& row : result.rows)
      if (row.n == n) vals.push_back(row.err_y_sup);
    std::sort(vals.begin(), vals.end());
    const double med = 0.5 * (vals[vals.size() / 2 - 1] + vals[vals.size() / 2]);
    points.emplace_back(static_cast<double>(n), med);
    medians += (medians.empty() ? "" : " ") + fmt(med);
  }
  const RateFit fit = fit_rate(points);

  // diagnostic: the same slope for the exact limit of the recursion, at the
  // configured K and at a K fine enough for the dt bias to clear the signal
  const auto model = fixture_model();
  std::vector<std::pair<double, double>> limit64, limit1024;
  for (const std::size_t n : cfg.n_list) {
    limit64.emplace_back(static_cast<double>(n), scheme_limit_error(model, n, 64));
    limit1024.emplace_back(static_cast<double>(n), scheme_limit_error(model, n, 1024));
  }
  const RateFit fit64 = fit_rate(limit64);
  const RateFit fit1024 = fit_rate(limit1024);

  Outcome out;
  out.pass = fit.slope >= -1.3 && fit.slope <= -0.8;
  out.detail = "seed-median err_y_sup {" + medians + "}, slope " + fmt(fit.slope) +
               " (window [-1.3, -0.8]); exact-limit slope of this recursion: " +
               fmt(fit64.slope) + " at K=64, " + fmt(fit1024.slope) +
               " at K=1024 - at K=64 the dt bias caps the observable rate";
  return out;
}

// ---------------------------------------------------------------------------
Outcome criterion4_correction_term() {
  const auto model = fixture_model();
  const double s2 = 0.16, s02 = 0.09;
  double worst_full = 0.0, worst_idio = 0.0, worst_halving = 0.0;
  CorrectionSeries series8;
  for (const std::size_t n : {8u, 16u}) {
    const auto paths = simulate_particles(model.spec, n, 64, 1);
    const auto corr = correction_term(model.solution, model.spec, paths);
    for (std::size_t k = 0; k < corr.times.size(); ++k) {
      const double L = model.riccati->coef_L(corr.times[k]);
      worst_full = std::max(worst_full,
                            std::abs(corr.full[k] - (s2 + s02) * L / static_cast<double>(n)));
      worst_idio =
          std::max(worst_idio, std::abs(corr.idio[k] - s2 * L / static_cast<double>(n)));
    }
    if (n == 8)
      series8 = corr;
    else
      for (std::size_t k = 0; k < corr.times.size(); ++k)
        worst_halving = std::max(worst_halving, std::abs(series8.full[k] - 2.0 * corr.full[k]));
  }
  Outcome out;
  out.pass = worst_full <= 1e-8 && worst_idio <= 1e-8 && worst_halving <= 1e-10;
  out.detail = "closed-form gap full " + fmt(worst_full) + ", idio " + fmt(worst_idio) +
               ", halving gap " + fmt(worst_halving);
  return out;
}

// ---------------------------------------------------------------------------
Outcome criterion5_lift_derivative() {
  const auto model = fixture_model();
  const NoiseField rng(0x11F7);
  double worst = 0.0;
  for (std::uint32_t trial = 0; trial < 50; ++trial) {
    std::vector<double> config(16);
    for (std::size_t i = 0; i < config.size(); ++i)
      config[i] =
          0.5 + rng.normal(NoiseField::kKindProbe, trial, 0, static_cast<std::uint32_t>(i));
    const double t = rng.uniform(NoiseField::kKindProbe, trial, 1, 0);
    const auto i = static_cast<std::size_t>(16.0 * rng.uniform(NoiseField::kKindProbe, trial, 1, 1)) % 16;
    worst = std::max(worst, lift_derivative_check(model.solution, t, config, 1, i, 1e-4));
  }
  Outcome out;
  out.pass = worst <= 1e-6;
  out.detail = "max discrepancy " + fmt(worst) + " over 50 triples at h=1e-4";
  return out;
}

// ---------------------------------------------------------------------------
Outcome criterion6_strong_order() {
  ModelSpec spec;
  spec.d = spec.n = spec.m = 1;
  spec.horizon_T = 1.0;
  spec.drift_b = [](double, std::span<const double> x, const EmpiricalMeasure&,
                    std::span<double> out) { out[0] = 0.05 * x[0]; };
  spec.vol_sigma = [](double, std::span<const double> x, const EmpiricalMeasure&,
                      std::span<double> out) { out[0] = 0.2 * x[0]; };
  spec.vol_sigma0 = [](double, std::span<const double>, const EmpiricalMeasure&,
                       std::span<double> out) { out[0] = 0.0; };
  spec.driver_H = [](double, std::span<const double>, const EmpiricalMeasure&, double,
                     std::span<const double>) { return 0.0; };
  spec.driver_Hb = spec.driver_H;
  spec.terminal_G = [](const EmpiricalMeasure&) { return 0.0; };
  spec.mu0_sampler = [](std::size_t count, const InitNoise&, std::span<double> out) {
    for (std::size_t i = 0; i < count; ++i) out[i] = 1.0;
  };
  std::vector<std::pair<double, double>> points;
  for (const std::size_t steps : {16u, 32u, 64u, 128u, 256u}) {
    const auto paths = simulate_particles(spec, 64, steps, 4);
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
  Outcome out;
  out.pass = -fit.slope >= 0.4 && -fit.slope <= 0.6;
  out.detail = "strong-error decay exponent " + fmt(-fit.slope) + " (window [0.4, 0.6])";
  return out;
}

// ---------------------------------------------------------------------------
Outcome criterion7_chaos() {
  auto cfg = parse_config(R"({
    "experiment": "chaos",
    "N": [8, 32, 128],
    "seeds": [1],
    "K": 64,
    "chaos": {"enabled": true, "replications": 256}
  })");
  const fs::path dir = "acceptance-out/criterion7";
  fs::remove_all(dir);
  std::ostringstream log;
  const auto result = run_sweep(cfg, dir.string(), false, log);

  std::vector<WeakChaosResult> chaos;
  for (const std::size_t n : cfg.n_list) {
    const auto it = result.chaos.find(std::to_string(n) + ":1");
    if (it == result.chaos.end() || !it->second.available)
      return {false, "chaos estimates unavailable"};
    chaos.push_back(it->second);
  }
  std::size_t inversions = 0;
  bool inversion_within_2se = true;
  for (std::size_t j = 0; j + 1 < chaos.size(); ++j) {
    if (chaos[j + 1].chaos_y >= chaos[j].chaos_y) {
      ++inversions;
      const double gap = chaos[j + 1].chaos_y - chaos[j].chaos_y;
      const double se = std::sqrt(chaos[j].se_chaos_y * chaos[j].se_chaos_y +
                                  chaos[j + 1].se_chaos_y * chaos[j + 1].se_chaos_y);
      if (gap > 2.0 * se) inversion_within_2se = false;
    }
  }
  bool decomposition_ok = true;
  for (const auto& c : chaos) decomposition_ok = decomposition_ok && c.decomposition_y_ok;

  Outcome out;
  out.pass = inversions <= 1 && inversion_within_2se && decomposition_ok;
  std::string vals;
  for (const auto& c : chaos) vals += (vals.empty() ? "" : " ") + fmt(c.chaos_y);
  out.detail = "chaos_y {" + vals + "}, inversions " + std::to_string(inversions) +
               ", decomposition " + (decomposition_ok ? "holds" : "violated");
  return out;
}

// ---------------------------------------------------------------------------
Outcome criterion8_determinism() {
  auto cfg = parse_config(R"({
    "experiment": "determinism",
    "N": [4, 8, 16, 32, 64],
    "seeds": [1],
    "K": 64
  })");
  std::ostringstream log;
  const fs::path dir1 = "acceptance-out/criterion8-a";
  const fs::path dir2 = "acceptance-out/criterion8-b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  cfg.threads = 1;
  run_sweep(cfg, dir1.string(), false, log);
  cfg.threads = 2;
  run_sweep(cfg, dir2.string(), false, log);
  const std::string b1 = body_of(dir1 / "results.csv");
  const std::string b2 = body_of(dir2 / "results.csv");
  Outcome out;
  out.pass = !b1.empty() && b1 == b2;
  out.detail = out.pass ? "bodies byte-identical across thread counts"
                        : "bodies differ between thread counts";
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "riccati residual gate", 10.0, criterion1_riccati_gate},
      {2, "pathwise O(1/N) rate, exact branch", 60.0, criterion2_exact_rate},
      {3, "pathwise O(1/N) rate, monte carlo branch", 600.0, criterion3_lsmc_rate},
      {4, "correction-term diagnostic", 10.0, criterion4_correction_term},
      {5, "lifted-derivative identity", 5.0, criterion5_lift_derivative},
      {6, "forward-scheme strong order", 30.0, criterion6_strong_order},
      {7, "chaos and weak-error decomposition", 600.0, criterion7_chaos},
      {8, "byte-identical results at any thread count", 600.0, criterion8_determinism},
  };

  bool all_pass = true;
  for (const auto& criterion : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criterion.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = seconds <= criterion.budget_seconds;
    const bool pass = out.pass && in_budget;
    all_pass = all_pass && pass;
    std::printf("[%s] criterion %d: %s (%s; %.1fs%s)\n", pass ? "PASS" : "FAIL", criterion.id,
                criterion.name, out.detail.c_str(), seconds,
                in_budget ? "" : ", OVER BUDGET");
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
