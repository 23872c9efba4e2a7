#include "mfp/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "mfp/errors.hpp"

namespace mfp {

namespace {

void check_grids(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) throw UsageError(std::string(who) + ": time grids differ in size");
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] != b[k]) throw UsageError(std::string(who) + ": time grids differ");
}

PathwiseErrors single_path_errors(const BackwardSolution& back, const AnalyticSolution& sol,
                                  const ParticlePaths& paths) {
  const std::size_t K = paths.steps(), N = paths.particles, d = paths.dim;
  const double dt = paths.times[1] - paths.times[0];
  PathwiseErrors out;
  std::vector<double> dmu(d);
  for (std::size_t k = 0; k <= K; ++k) {
    const double t = paths.times[k];
    const EmpiricalMeasure mu(paths.step_states(k), d);
    out.err_y_sup = std::max(out.err_y_sup, std::abs(back.y_at(k) - sol.v(t, mu)));
    const double w = (k == 0 || k == K) ? 0.5 * dt : dt;
    double step_sq = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      sol.dmu_v(t, mu, paths.state(k, i), dmu);
      const auto zi = back.z_at(k, i);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = static_cast<double>(N) * zi[c] - dmu[c];
        step_sq += diff * diff;
      }
    }
    out.err_z_int += w * step_sq / static_cast<double>(N);
  }
  return out;
}

}  // namespace

PathwiseErrors pathwise_errors(const BackwardSolution& back, const AnalyticSolution& sol,
                               const ParticlePaths& paths) {
  check_grids(back.times, paths.times, "pathwise_errors");
  if (back.method != BackwardMethod::analytic)
    throw UsageError("pathwise_errors: single-path form expects the analytic method");
  if (!sol.v || !sol.dmu_v) throw UsageError("pathwise_errors: solution evaluators missing");
  return single_path_errors(back, sol, paths);
}

std::vector<PathwiseErrors> pathwise_errors(const BackwardSolution& back,
                                            const AnalyticSolution& sol, const PathBatch& batch) {
  check_grids(back.times, batch.times, "pathwise_errors");
  if (back.method != BackwardMethod::lsmc)
    throw UsageError("pathwise_errors: batch form expects the lsmc method");
  const std::size_t K = batch.steps(), N = batch.particles, d = batch.dim, P = batch.paths;
  const double dt = batch.times[1] - batch.times[0];
  std::vector<PathwiseErrors> out(P);
  std::vector<double> dmu(d), zrow(N * d);
  for (std::size_t k = 0; k <= K; ++k) {
    const double t = batch.times[k];
    for (std::size_t p = 0; p < P; ++p) {
      const EmpiricalMeasure mu(batch.config(k, p), d);
      out[p].err_y_sup = std::max(out[p].err_y_sup, std::abs(back.y_at(k, p) - sol.v(t, mu)));
      if (k == K) continue;  // no terminal regression layer
      // trapezoid on [t_0, t_{K-1}], left rectangle on the last interval
      const double w = (k == 0) ? 0.5 * dt : (k == K - 1 ? 1.5 * dt : dt);
      back.z_block(batch, k, p, zrow);
      double step_sq = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        sol.dmu_v(t, mu, batch.state(k, p, i), dmu);
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = static_cast<double>(N) * zrow[i * d + c] - dmu[c];
          step_sq += diff * diff;
        }
      }
      out[p].err_z_int += w * step_sq / static_cast<double>(N);
    }
  }
  return out;
}

WeakChaosResult weak_and_chaos_errors(std::span<const Replication> reps,
                                      const AnalyticSolution& sol) {
  WeakChaosResult out;
  out.replications = reps.size();
  if (reps.empty()) return out;
  if (!sol.v_on_moments || !sol.dmu_v_on_moments || !sol.v || !sol.dmu_v) return out;
  for (const auto& rep : reps) {
    if (rep.limit.states.empty() || rep.back.method != BackwardMethod::analytic) return out;
    if (rep.paths.dim != 1 || rep.limit.copies != rep.paths.particles) return out;
  }

  const std::size_t R = reps.size();
  const std::size_t K = reps.front().paths.steps();
  const std::size_t N = reps.front().paths.particles;
  const auto& times = reps.front().paths.times;
  const double dt = times[1] - times[0];

  // per-time accumulators
  std::vector<double> sum_y(K + 1, 0.0), sum_vemp(K + 1, 0.0), sum_vlaw(K + 1, 0.0);
  std::vector<double> sq_dy(K + 1, 0.0), sq_dchaos(K + 1, 0.0);
  // per (i, time) accumulators for the Z quantities
  std::vector<double> sum_nz(N * (K + 1), 0.0), sum_dmu_emp(N * (K + 1), 0.0),
      sum_dmu_law(N * (K + 1), 0.0);
  double sum_pw = 0.0, sq_pw = 0.0;

  std::vector<double> dmu(1);
  for (const auto& rep : reps) {
    check_grids(rep.paths.times, times, "weak_and_chaos_errors");
    double pw = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      const double t = times[k];
      const EmpiricalMeasure mu(rep.paths.step_states(k), 1);
      const double y_val = rep.back.y_at(k);
      const double v_emp = sol.v(t, mu);
      const double m_k = rep.limit.cond_mean[k];
      const double m2_k = m_k * m_k + rep.limit.cond_var[k];
      const double v_law = sol.v_on_moments(t, std::span<const double>(&m_k, 1), m2_k);
      sum_y[k] += y_val;
      sum_vemp[k] += v_emp;
      sum_vlaw[k] += v_law;
      sq_dy[k] += (y_val - v_law) * (y_val - v_law);
      sq_dchaos[k] += (v_emp - v_law) * (v_emp - v_law);
      pw = std::max(pw, std::abs(y_val - v_emp));
      for (std::size_t i = 0; i < N; ++i) {
        const auto xi = rep.paths.state(k, i);
        sol.dmu_v(t, mu, xi, dmu);
        sum_dmu_emp[i * (K + 1) + k] += dmu[0];
        sum_nz[i * (K + 1) + k] += static_cast<double>(N) * rep.back.z_at(k, i)[0];
        const double x_lim = rep.limit.states[k * N + i];
        sol.dmu_v_on_moments(t, std::span<const double>(&m_k, 1),
                             std::span<const double>(&x_lim, 1), dmu);
        sum_dmu_law[i * (K + 1) + k] += dmu[0];
      }
    }
    sum_pw += pw;
    sq_pw += pw * pw;
  }

  const double r_count = static_cast<double>(R);
  auto sd_of_mean = [r_count](double sum, double sumsq) {
    if (r_count < 2) return 0.0;
    const double mean_val = sum / r_count;
    const double var = std::max(0.0, sumsq / r_count - mean_val * mean_val);
    return std::sqrt(var / (r_count - 1.0));
  };

  std::size_t arg_y = 0, arg_chaos = 0;
  for (std::size_t k = 0; k <= K; ++k) {
    const double ey = std::abs(sum_y[k] - sum_vlaw[k]) / r_count;
    if (ey >= out.e_y_weak) {
      out.e_y_weak = ey;
      arg_y = k;
    }
    const double cy = std::abs(sum_vemp[k] - sum_vlaw[k]) / r_count;
    if (cy >= out.chaos_y) {
      out.chaos_y = cy;
      arg_chaos = k;
    }
  }
  out.se_y_weak = sd_of_mean(sum_y[arg_y] - sum_vlaw[arg_y], sq_dy[arg_y]);
  out.se_chaos_y = sd_of_mean(sum_vemp[arg_chaos] - sum_vlaw[arg_chaos], sq_dchaos[arg_chaos]);

  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k <= K; ++k) {
      const double w = (k == 0 || k == K) ? 0.5 * dt : dt;
      const double dz = (sum_nz[i * (K + 1) + k] - sum_dmu_law[i * (K + 1) + k]) / r_count;
      const double dchaos =
          (sum_dmu_emp[i * (K + 1) + k] - sum_dmu_law[i * (K + 1) + k]) / r_count;
      out.e_z_weak += w * dz * dz;
      out.chaos_z += w * dchaos * dchaos;
    }
  }
  out.e_z_weak /= static_cast<double>(N);
  out.chaos_z /= static_cast<double>(N);

  out.mean_pathwise_y = sum_pw / r_count;
  out.se_mean_pathwise_y = sd_of_mean(sum_pw, sq_pw);
  const double slack = 3.0 * std::sqrt(out.se_y_weak * out.se_y_weak +
                                       out.se_chaos_y * out.se_chaos_y +
                                       out.se_mean_pathwise_y * out.se_mean_pathwise_y);
  out.decomposition_y_ok = out.e_y_weak <= out.mean_pathwise_y + out.chaos_y + slack;
  out.available = true;
  return out;
}

double lift_derivative_check(const AnalyticSolution& sol, double t, std::span<const double> config,
                             std::size_t dim, std::size_t i, double h) {
  if (!(h > 0.0)) throw UsageError("lift_derivative_check: h must be positive");
  if (!sol.v || !sol.dmu_v) throw UsageError("lift_derivative_check: evaluators missing");
  const std::size_t n = config.size() / dim;
  std::vector<double> bumped(config.begin(), config.end());
  std::vector<double> dmu(dim);
  const EmpiricalMeasure mu(config, dim);
  sol.dmu_v(t, mu, mu.atom(i), dmu);
  double worst = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const double base = config[i * dim + c];
    bumped[i * dim + c] = base + h;
    const double up = sol.v(t, EmpiricalMeasure(bumped, dim));
    bumped[i * dim + c] = base - h;
    const double down = sol.v(t, EmpiricalMeasure(bumped, dim));
    bumped[i * dim + c] = base;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - dmu[c] / static_cast<double>(n)));
  }
  return worst;
}

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
  RateFit out;
  std::vector<double> lx, ly;
  for (const auto& [n_val, err] : points) {
    if (!(err > 0.0) || !(n_val > 0.0)) {
      ++out.excluded;
      continue;
    }
    lx.push_back(std::log(n_val));
    ly.push_back(std::log(err));
  }
  out.n_points = lx.size();
  if (out.n_points < 3)
    throw FitError("fit_rate: fewer than three usable (N, error) points");
  const double count = static_cast<double>(out.n_points);
  double mx = 0.0, my = 0.0;
  for (std::size_t j = 0; j < lx.size(); ++j) {
    mx += lx[j];
    my += ly[j];
  }
  mx /= count;
  my /= count;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t j = 0; j < lx.size(); ++j) {
    sxx += (lx[j] - mx) * (lx[j] - mx);
    sxy += (lx[j] - mx) * (ly[j] - my);
    syy += (ly[j] - my) * (ly[j] - my);
  }
  if (!(sxx > 0.0)) throw FitError("fit_rate: N values must not be all equal");
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  double ss_res = 0.0;
  for (std::size_t j = 0; j < lx.size(); ++j) {
    const double r = ly[j] - (out.intercept + out.slope * lx[j]);
    ss_res += r * r;
  }
  out.r2 = (syy > 0.0) ? 1.0 - ss_res / syy : 1.0;
  return out;
}

}  // namespace mfp
