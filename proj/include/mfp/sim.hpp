#ifndef MFP_SIM_HPP
#define MFP_SIM_HPP

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "mfp/model.hpp"
#include "mfp/rng.hpp"

namespace mfp {

// One explicit Euler-Maruyama trajectory of the N-particle system, together
// with the Brownian increments that generated it. Deterministic function of
// (seed, N, K, spec, stream_ids).
struct ParticlePaths {
  std::vector<double> times;  // K+1 nodes, uniform grid on [0,T]
  std::size_t particles = 0, dim = 0, noise_dim = 0, common_dim = 0;
  std::vector<double> states;  // (K+1) x N x d
  std::vector<double> dw;      // K x N x n
  std::vector<double> dw0;     // K x m
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> stream_ids;  // per particle; common noise uses stream 0

  std::size_t steps() const { return times.size() - 1; }
  std::span<const double> state(std::size_t k, std::size_t i) const {
    return {states.data() + (k * particles + i) * dim, dim};
  }
  std::span<const double> step_states(std::size_t k) const {
    return {states.data() + k * particles * dim, particles * dim};
  }
  std::span<const double> delta_w(std::size_t k, std::size_t i) const {
    return {dw.data() + (k * particles + i) * noise_dim, noise_dim};
  }
  std::span<const double> delta_w0(std::size_t k) const {
    return {dw0.data() + k * common_dim, common_dim};
  }
};

// P independent N-particle realizations sharing one seed; path p, particle i
// draws from stream p*N+i, the common noise of path p from stream p. States
// are stored time-major; idiosyncratic increments are not stored but
// regenerated from their addresses on demand, bit-identical to the forward
// pass.
struct PathBatch {
  std::vector<double> times;
  std::size_t paths = 0, particles = 0, dim = 0, noise_dim = 0, common_dim = 0;
  std::vector<double> states;  // (K+1) x P x N x d
  std::vector<double> dw0;     // K x P x m
  std::uint64_t seed = 0;

  std::size_t steps() const { return times.size() - 1; }
  std::span<const double> config(std::size_t k, std::size_t p) const {
    return {states.data() + ((k * paths + p) * particles) * dim, particles * dim};
  }
  std::span<const double> state(std::size_t k, std::size_t p, std::size_t i) const {
    return {states.data() + ((k * paths + p) * particles + i) * dim, dim};
  }
  std::span<const double> delta_w0(std::size_t k, std::size_t p) const {
    return {dw0.data() + (k * paths + p) * common_dim, common_dim};
  }
  void delta_w(std::size_t k, std::size_t p, std::size_t i, std::span<double> out) const;
};

// M i.i.d. copies of the limiting conditional McKean-Vlasov dynamics sharing
// the common-noise path of a paired particle run, plus the analytically
// propagated conditional-Gaussian descriptor (mean, variance).
struct LimitPaths {
  std::vector<double> times;
  std::size_t copies = 0;
  std::vector<double> states;     // (K+1) x M (scalar models)
  std::vector<double> cond_mean;  // K+1
  std::vector<double> cond_var;   // K+1
};

// Explicit Euler-Maruyama for the interacting system: one shared common-noise
// increment per step, measure argument frozen at the current step.
// Non-finite states abort with the step and particle id.
ParticlePaths simulate_particles(const ModelSpec& spec, std::size_t particles, std::size_t steps,
                                 std::uint64_t seed,
                                 std::span<const std::uint32_t> stream_ids = {});

PathBatch simulate_batch(const ModelSpec& spec, std::size_t particles, std::size_t paths,
                         std::size_t steps, std::uint64_t seed, std::size_t threads = 1);

// Requires the model to declare an affine drift, Gaussian mu0 and constant
// volatilities (scalar state); throws UnsupportedModelError otherwise.
// dw0 must be the K shared common-noise increments of the paired run.
LimitPaths simulate_limit(const ModelSpec& spec, std::size_t copies, std::size_t steps,
                          std::uint64_t seed, std::span<const double> dw0);

// max over grid times of |X^N_t|^p (single-path proxy of the moment bound);
// p in {2, 4, 8}.
double moment_monitor(const ParticlePaths& paths, unsigned p);

// CSV dump: columns k,t,i,x_1..x_d.
void dump_paths_csv(const ParticlePaths& paths, std::ostream& os);

}  // namespace mfp

#endif  // MFP_SIM_HPP
