#ifndef MFP_LQ_HPP
#define MFP_LQ_HPP

#include <memory>
#include <ostream>
#include <span>
#include <vector>

#include "mfp/lq_types.hpp"
#include "mfp/model.hpp"

namespace mfp {

// Test hook: integrate the backward ODEs with the sign of q flipped while the
// stored parameters (and hence the residual oracles) keep the true value.
// A solution produced this way must fail the residual gate.
struct RiccatiOptions {
  bool negate_q_in_ode = false;
};

// Backward coefficient system for the scalar LQ instance, with w the control
// weight and r = 0:
//
//   K' = K^2/w - q - 2aK                    K(T) = g
//   L' = (2KL + L^2)/w - qbar - 2aL         L(T) = gbar
//   chi' = -(sigma^2 + sigma0^2) K - sigma0^2 L            chi(T) = 0
//   c_N' = chi' - sigma^2 L / N                            c_N(T) = 0
//
// giving v(t,mu) = K m2(mu) + L mean(mu)^2 + chi and
// v^N(t,x) = K (1/N) sum x_i^2 + L xbar^2 + c_N.  The system is validated by
// the residual oracles below, not trusted.
class RiccatiSolution {
 public:
  const LqParams& params() const { return params_; }
  double horizon() const { return params_.horizon; }

  // Interpolated coefficients (cubic Hermite between RK4 nodes).
  double coef_K(double t) const;
  double coef_L(double t) const;
  double coef_chi(double t) const;
  // int_t^T L(s) ds
  double integral_L(double t) const;
  // c_N(t) = chi(t) + sigma^2 * integral_L(t) / N
  double coef_cN(double t, std::size_t n) const;

  double v(double t, const EmpiricalMeasure& mu) const;
  double dmu_v(double t, const EmpiricalMeasure& mu, double x) const;  // 2K x + 2L mean
  double dx_dmu_v(double t) const;                                     // 2K
  double d2mu_v(double t) const;                                       // 2L
  double v_n(double t, std::span<const double> xs) const;
  double grad_v_n(double t, std::span<const double> xs, std::size_t i) const;

  std::span<const double> grid() const { return t_; }

 private:
  friend RiccatiSolution solve_riccati(const LqParams&, std::size_t, const RiccatiOptions&);
  LqParams params_;
  std::vector<double> t_, K_, L_, chi_, IL_;      // ascending t grid
  std::vector<double> dK_, dL_, dchi_, dIL_;      // d/dt at nodes, from the ODE RHS
  double interpolate(const std::vector<double>& f, const std::vector<double>& df, double t) const;
};

// Classical RK4 backward integration on a uniform grid of `grid_size` steps
// (grid_size >= 256). Throws HorizonError naming the blow-up time when |K| or
// |L| exceeds 1e8 before t = 0.
RiccatiSolution solve_riccati(const LqParams& params, std::size_t grid_size = 1024,
                              const RiccatiOptions& options = {});

// Residual of the assembled v in the Wasserstein-space PDE, evaluated at an
// empirical measure: |dt_v + (1/N) sum_j [H + (1/2)(s^2+s0^2) dx_dmu_v]
// + (1/2) s0^2 mean-field trace|; dt_v by central difference on the
// interpolated coefficients. Requires t in the open interval (0,T).
double pde_residual(const RiccatiSolution& sol, double t, const EmpiricalMeasure& mu);

// Residual of v^N in the finite-dimensional PDE at configuration xs.
double finite_dim_residual(const RiccatiSolution& sol, double t, std::span<const double> xs);

// ModelSpec plus its completed analytic companion.
struct LqModel {
  LqParams params;
  AffineDrift drift;
  GaussianLaw mu0;
  std::shared_ptr<const RiccatiSolution> riccati;
  ModelSpec spec;
  AnalyticSolution solution;
};

LqModel make_lq_model(const LqParams& params, const AffineDrift& drift, const GaussianLaw& mu0,
                      std::size_t riccati_grid = 1024, const RiccatiOptions& options = {});

// Coefficient table dump: t,K,L,chi then c_N per requested N.
void dump_riccati_csv(const RiccatiSolution& sol, std::span<const std::size_t> n_list,
                      std::ostream& os);

// Residual gate guarding everything downstream of the Riccati solve:
// pde_residual over 20 deterministic pseudo-random 16-atom measures at the 9
// interior times j*T/10, and the finite-dimensional residual at N = 8 over 20
// configurations at the same times. Passes when both maxima are <= 1e-6.
struct ResidualGate {
  double max_pde_residual = 0.0;
  double max_finite_dim_residual = 0.0;
  double tolerance = 1e-6;
  bool pass = false;
};

ResidualGate riccati_residual_gate(const RiccatiSolution& sol);

}  // namespace mfp

#endif  // MFP_LQ_HPP
