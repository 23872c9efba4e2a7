#ifndef MFP_MODEL_HPP
#define MFP_MODEL_HPP

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfp/empirical.hpp"
#include "mfp/lq_types.hpp"
#include "mfp/rng.hpp"

namespace mfp {

// Coefficient callables write into caller-provided spans so that evaluation
// inside particle loops allocates nothing.
using DriftFn = std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                                   std::span<double> out)>;  // out: d
using VolFn = std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                                 std::span<double> out)>;  // out: d*cols, row-major
using DriverFn = std::function<double(double t, std::span<const double> x,
                                      const EmpiricalMeasure& mu, double y,
                                      std::span<const double> z)>;
using TerminalFn = std::function<double(const EmpiricalMeasure& mu)>;
// Writes `count` i.i.d. mu0 atoms (count*d doubles, atom-major); atom i must
// consume only noise.normal(i, .) so that atom draws follow their streams.
using Mu0Sampler = std::function<void(std::size_t count, const InitNoise& noise,
                                      std::span<double> out)>;

// One mean-field problem instance.
struct ModelSpec {
  std::size_t d = 1;  // state dimension
  std::size_t n = 1;  // idiosyncratic-noise dimension
  std::size_t m = 1;  // common-noise dimension
  DriftFn drift_b;
  VolFn vol_sigma;    // d x n
  VolFn vol_sigma0;   // d x m
  DriverFn driver_H;
  DriverFn driver_Hb;  // H_b(t,x,mu,y,z) = H(t,x,mu,y,z) - b(t,x,mu).z
  TerminalFn terminal_G;
  Mu0Sampler mu0_sampler;
  double horizon_T = 1.0;

  // Structure descriptors consumed by the conditional-law recursion
  // (scalar models with affine drift and constant volatilities only).
  std::optional<AffineDrift> affine_drift;
  std::optional<GaussianLaw> mu0_law;
  std::optional<double> const_sigma;
  std::optional<double> const_sigma0;
};

// Closed-form-or-known evaluators of the limiting solution v.
struct AnalyticSolution {
  std::function<double(double t, const EmpiricalMeasure& mu)> v;
  std::function<void(double t, const EmpiricalMeasure& mu, std::span<const double> x,
                     std::span<double> out)>
      dmu_v;  // out: d
  std::function<void(double t, const EmpiricalMeasure& mu, std::span<const double> x,
                     std::span<double> out)>
      dx_dmu_v;  // out: d*d
  std::function<void(double t, const EmpiricalMeasure& mu, std::span<const double> x,
                     std::span<const double> x2, std::span<double> out)>
      d2mu_v;  // out: d*d
  // Finite-dimensional solution and its gradient, when known (may be empty).
  std::function<double(double t, std::span<const double> xs)> v_n;
  std::function<void(double t, std::span<const double> xs, std::size_t i, std::span<double> out)>
      grad_v_n;
  // Evaluation at a law described by its first two moments, when the solution
  // depends on mu only through (mean, m2). Used for conditional-law references.
  std::function<double(double t, std::span<const double> law_mean, double law_m2)> v_on_moments;
  std::function<void(double t, std::span<const double> law_mean, std::span<const double> x,
                     std::span<double> out)>
      dmu_v_on_moments;
};

// --- Bellman driver -------------------------------------------------------

using ControlDrift = std::function<void(double t, std::span<const double> x,
                                        const EmpiricalMeasure& mu, double a,
                                        std::span<double> out)>;  // beta: d
using RunningCost =
    std::function<double(std::span<const double> x, const EmpiricalMeasure& mu, double a)>;
// Returns an exact minimizer over the action set of a |-> beta(.,a).z + f(.,a).
using Minimizer = std::function<double(double t, std::span<const double> x,
                                       const EmpiricalMeasure& mu, std::span<const double> z)>;

// H(t,x,mu,y,z) = -r*y + inf_a [ beta(t,x,mu,a).z + f(x,mu,a) ], the infimum
// evaluated through `minimizer`. Non-finite beta/f output raises
// EvaluationError naming the offending arguments.
DriverFn build_control_driver(ControlDrift beta, RunningCost f, double r, Minimizer minimizer,
                              std::size_t d);

// Deterministic fallback minimizers.
Minimizer make_grid_minimizer(ControlDrift beta, RunningCost f, double lo, double hi,
                              std::size_t points = 1001);
Minimizer make_finite_set_minimizer(ControlDrift beta, RunningCost f,
                                    std::vector<double> actions);

// --- Assumption validation -------------------------------------------------

struct AssumptionCaps {
  double modulus_cap = 1e6;       // any observed Lipschitz modulus above this flags
  double sigma_norm_cap = 1e6;    // boundedness proxy for sigma and its pseudo-inverse
  double min_sigma_sv = 1e-9;     // smallest singular value of sigma before (ii) flags
};

struct AssumptionReport {
  // (i) observed moduli over probe pairs (lower bounds, never certified)
  double lip_b = 0.0;
  double lip_sigma = 0.0;
  double lip_sigma0 = 0.0;
  // (ii)
  double max_sigma_norm = 0.0;
  double max_sigma_pinv_norm = 0.0;
  bool sigma_invertible = true;
  // (iii) with q = 2, i.e. the 8th-moment norm of mu0
  double mu0_norm_4q = 0.0;
  double coeff_time_integral_4q = 0.0;  // int_0^T |b|+|sigma|+|sigma0| at (t,0,delta_0), 4q power
  // (iv)
  double lip_hb_yz = 0.0;
  double lip_hb_xmu = 0.0;
  // (v)
  double lip_g = 0.0;
  bool violations = false;
  std::vector<std::string> notes;
};

// Estimates the Assumption-2 moduli by random probing. Probe distribution:
// x ~ 3*N(0,I_d), mu = empirical measure of 16 i.i.d. N(0,I_d) atoms,
// t uniform on [0,T]; pairs come in three flavours (x varies, mu varies,
// both vary) so linear-in-x moduli are recovered exactly.
AssumptionReport validate_assumptions(const ModelSpec& spec, std::size_t probe_count,
                                      const NoiseField& rng, const AssumptionCaps& caps = {});

// Observed Assumption-1 growth constant of a solution:
// max over probes of |dmu_v| / (1+|x|+||mu||_2) and |d2mu_v(x,x)|.
double observed_growth_constant(const AnalyticSolution& sol, std::size_t d, double horizon,
                                std::size_t probe_count, const NoiseField& rng);

// Scalar LQ instance: d = n = m = 1, r = 0; the Bellman infimum has the
// closed-form minimizer a* = -z/(2w). The analytic companion is produced by
// make_lq_model in lq.hpp.
ModelSpec lq_model_spec(const LqParams& params, const AffineDrift& drift, const GaussianLaw& mu0);

}  // namespace mfp

#endif  // MFP_MODEL_HPP
