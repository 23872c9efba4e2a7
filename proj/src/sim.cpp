#include "mfp/sim.hpp"

#include <cmath>
#include <cstdio>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

namespace {

std::vector<double> uniform_grid(double horizon, std::size_t steps) {
  std::vector<double> t(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k)
    t[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  return t;
}

// Advances one system from step k to k+1. `x_now` holds N*d doubles; the
// updated states go to `x_next`. Increments, when requested, are written to
// dw_out (N*n) and dw0_out (m).
struct StepWorkspace {
  std::vector<double> drift, sigma, sigma0, dwi, dw0;
};

void euler_step(const ModelSpec& spec, const NoiseField& rng, double t, double dt,
                std::size_t step, std::span<const double> x_now, std::span<double> x_next,
                std::span<const std::uint32_t> streams, std::uint32_t common_stream,
                StepWorkspace& ws, double* dw_store, double* dw0_store) {
  const std::size_t d = spec.d, n = spec.n, m = spec.m;
  const std::size_t count = streams.size();
  const double sqrt_dt = std::sqrt(dt);
  ws.drift.resize(d);
  ws.sigma.resize(d * n);
  ws.sigma0.resize(d * m);
  ws.dwi.resize(n);
  ws.dw0.resize(m);

  for (std::size_t c = 0; c < m; ++c)
    ws.dw0[c] = sqrt_dt * rng.normal(NoiseField::kKindCommon, common_stream,
                                     static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(c));
  if (dw0_store)
    for (std::size_t c = 0; c < m; ++c) dw0_store[c] = ws.dw0[c];

  const EmpiricalMeasure mu(x_now, d);
  for (std::size_t i = 0; i < count; ++i) {
    const std::span<const double> xi = x_now.subspan(i * d, d);
    spec.drift_b(t, xi, mu, ws.drift);
    spec.vol_sigma(t, xi, mu, ws.sigma);
    spec.vol_sigma0(t, xi, mu, ws.sigma0);
    for (std::size_t j = 0; j < n; ++j)
      ws.dwi[j] = sqrt_dt * rng.normal(NoiseField::kKindIdio, streams[i],
                                       static_cast<std::uint32_t>(step),
                                       static_cast<std::uint32_t>(j));
    if (dw_store)
      for (std::size_t j = 0; j < n; ++j) dw_store[i * n + j] = ws.dwi[j];
    for (std::size_t c = 0; c < d; ++c) {
      double next = xi[c] + ws.drift[c] * dt;
      for (std::size_t j = 0; j < n; ++j) next += ws.sigma[c * n + j] * ws.dwi[j];
      for (std::size_t j = 0; j < m; ++j) next += ws.sigma0[c * m + j] * ws.dw0[j];
      if (!std::isfinite(next)) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "simulation blow-up: non-finite state at step %zu, particle %zu", step, i);
        throw BlowUpError(step, i, buf);
      }
      x_next[i * d + c] = next;
    }
  }
}

}  // namespace

ParticlePaths simulate_particles(const ModelSpec& spec, std::size_t particles, std::size_t steps,
                                 std::uint64_t seed, std::span<const std::uint32_t> stream_ids) {
  if (particles == 0 || steps == 0)
    throw UsageError("simulate_particles: need at least one particle and one step");
  if (!stream_ids.empty() && stream_ids.size() != particles)
    throw UsageError("simulate_particles: stream_ids size mismatch");

  ParticlePaths out;
  out.particles = particles;
  out.dim = spec.d;
  out.noise_dim = spec.n;
  out.common_dim = spec.m;
  out.seed = seed;
  out.times = uniform_grid(spec.horizon_T, steps);
  out.stream_ids.resize(particles);
  for (std::size_t i = 0; i < particles; ++i)
    out.stream_ids[i] = stream_ids.empty() ? static_cast<std::uint32_t>(i) : stream_ids[i];

  out.states.resize((steps + 1) * particles * spec.d);
  out.dw.resize(steps * particles * spec.n);
  out.dw0.resize(steps * spec.m);

  const NoiseField rng(seed);
  const InitNoise init(rng, out.stream_ids);
  spec.mu0_sampler(particles, init,
                   std::span<double>(out.states.data(), particles * spec.d));

  const double dt = spec.horizon_T / static_cast<double>(steps);
  StepWorkspace ws;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::span<const double> x_now(out.states.data() + k * particles * spec.d,
                                        particles * spec.d);
    const std::span<double> x_next(out.states.data() + (k + 1) * particles * spec.d,
                                   particles * spec.d);
    euler_step(spec, rng, out.times[k], dt, k, x_now, x_next, out.stream_ids, 0, ws,
               out.dw.data() + k * particles * spec.n, out.dw0.data() + k * spec.m);
  }
  return out;
}

void PathBatch::delta_w(std::size_t k, std::size_t p, std::size_t i, std::span<double> out) const {
  const NoiseField rng(seed);
  const double dt = times[1] - times[0];
  const double sqrt_dt = std::sqrt(dt);
  const auto stream = static_cast<std::uint32_t>(p * particles + i);
  for (std::size_t j = 0; j < noise_dim; ++j)
    out[j] = sqrt_dt * rng.normal(NoiseField::kKindIdio, stream, static_cast<std::uint32_t>(k),
                                  static_cast<std::uint32_t>(j));
}

PathBatch simulate_batch(const ModelSpec& spec, std::size_t particles, std::size_t paths,
                         std::size_t steps, std::uint64_t seed, std::size_t threads) {
  if (particles == 0 || paths == 0 || steps == 0)
    throw UsageError("simulate_batch: need particles, paths and steps");
  PathBatch out;
  out.paths = paths;
  out.particles = particles;
  out.dim = spec.d;
  out.noise_dim = spec.n;
  out.common_dim = spec.m;
  out.seed = seed;
  out.times = uniform_grid(spec.horizon_T, steps);
  out.states.resize((steps + 1) * paths * particles * spec.d);
  out.dw0.resize(steps * paths * spec.m);

  const NoiseField rng(seed);
  const double dt = spec.horizon_T / static_cast<double>(steps);
  parallel_for(paths, threads, [&](std::size_t p) {
    std::vector<std::uint32_t> streams(particles);
    for (std::size_t i = 0; i < particles; ++i)
      streams[i] = static_cast<std::uint32_t>(p * particles + i);
    const InitNoise init(rng, streams);
    spec.mu0_sampler(particles, init,
                     std::span<double>(out.states.data() + p * particles * spec.d,
                                       particles * spec.d));
    StepWorkspace ws;
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t base = (k * paths + p) * particles * spec.d;
      const std::size_t base_next = ((k + 1) * paths + p) * particles * spec.d;
      const std::span<const double> x_now(out.states.data() + base, particles * spec.d);
      const std::span<double> x_next(out.states.data() + base_next, particles * spec.d);
      euler_step(spec, rng, out.times[k], dt, k, x_now, x_next, streams,
                 static_cast<std::uint32_t>(p), ws, nullptr,
                 out.dw0.data() + (k * paths + p) * spec.m);
    }
  });
  return out;
}

LimitPaths simulate_limit(const ModelSpec& spec, std::size_t copies, std::size_t steps,
                          std::uint64_t seed, std::span<const double> dw0) {
  if (!spec.affine_drift || !spec.mu0_law || !spec.const_sigma || !spec.const_sigma0 ||
      spec.d != 1 || spec.n != 1 || spec.m != 1)
    throw UnsupportedModelError(
        "simulate_limit: needs a scalar model with affine drift, Gaussian mu0 and constant "
        "volatilities");
  if (copies == 0 || steps == 0) throw UsageError("simulate_limit: need copies and steps");
  if (dw0.size() != steps) throw UsageError("simulate_limit: dw0 must hold one increment per step");

  const AffineDrift b = *spec.affine_drift;
  const double sigma = *spec.const_sigma, sigma0 = *spec.const_sigma0;
  const double dt = spec.horizon_T / static_cast<double>(steps);
  const double sqrt_dt = std::sqrt(dt);

  LimitPaths out;
  out.copies = copies;
  out.times = uniform_grid(spec.horizon_T, steps);
  out.states.resize((steps + 1) * copies);
  out.cond_mean.resize(steps + 1);
  out.cond_var.resize(steps + 1);

  out.cond_mean[0] = spec.mu0_law->mean;
  out.cond_var[0] = spec.mu0_law->var;
  for (std::size_t k = 0; k < steps; ++k) {
    out.cond_mean[k + 1] =
        out.cond_mean[k] + (b.b0 + (b.b1 + b.b2) * out.cond_mean[k]) * dt + sigma0 * dw0[k];
    out.cond_var[k + 1] = out.cond_var[k] + (2.0 * b.b1 * out.cond_var[k] + sigma * sigma) * dt;
  }

  const NoiseField rng(seed);
  std::vector<std::uint32_t> streams(copies);
  for (std::size_t i = 0; i < copies; ++i) streams[i] = static_cast<std::uint32_t>(i);
  const InitNoise init(rng, streams);
  spec.mu0_sampler(copies, init, std::span<double>(out.states.data(), copies));

  for (std::size_t k = 0; k < steps; ++k) {
    const double m_k = out.cond_mean[k];
    for (std::size_t i = 0; i < copies; ++i) {
      const double x = out.states[k * copies + i];
      const double dwi = sqrt_dt * rng.normal(NoiseField::kKindIdio, streams[i],
                                              static_cast<std::uint32_t>(k), 0);
      const double next = x + (b.b0 + b.b1 * x + b.b2 * m_k) * dt + sigma * dwi + sigma0 * dw0[k];
      if (!std::isfinite(next)) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "limit simulation blow-up: non-finite state at step %zu, copy %zu", k, i);
        throw BlowUpError(k, i, buf);
      }
      out.states[(k + 1) * copies + i] = next;
    }
  }
  return out;
}

double moment_monitor(const ParticlePaths& paths, unsigned p) {
  if (p != 2 && p != 4 && p != 8) throw UsageError("moment_monitor: p must be 2, 4 or 8");
  double best = 0.0;
  const std::size_t nd = paths.particles * paths.dim;
  for (std::size_t k = 0; k < paths.times.size(); ++k) {
    double sq = 0.0;
    for (std::size_t j = 0; j < nd; ++j) {
      const double x = paths.states[k * nd + j];
      sq += x * x;
    }
    best = std::max(best, std::pow(sq, static_cast<double>(p) / 2.0));
  }
  return best;
}

void dump_paths_csv(const ParticlePaths& paths, std::ostream& os) {
  os << "k,t,i";
  for (std::size_t c = 1; c <= paths.dim; ++c) os << ",x_" << c;
  os << "\n";
  char buf[64];
  for (std::size_t k = 0; k < paths.times.size(); ++k) {
    for (std::size_t i = 0; i < paths.particles; ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%zu", k, paths.times[k], i);
      os << buf;
      for (std::size_t c = 0; c < paths.dim; ++c) {
        std::snprintf(buf, sizeof(buf), ",%.17g", paths.state(k, i)[c]);
        os << buf;
      }
      os << "\n";
    }
  }
}

}  // namespace mfp
