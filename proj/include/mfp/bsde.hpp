#ifndef MFP_BSDE_HPP
#define MFP_BSDE_HPP

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mfp/model.hpp"
#include "mfp/sim.hpp"

namespace mfp {

enum class BackwardMethod { analytic, lsmc };

// Permutation-invariant statistics of the particle configuration on which the
// value regression runs. The solution of the PDE is symmetric, so the basis is
// built from (mean, m2) only.
enum class SymmetricFeature { one, mean, m2, mean_sq, mean_m2, m2_sq };

struct BasisSpec {
  std::vector<SymmetricFeature> features{SymmetricFeature::one, SymmetricFeature::mean,
                                         SymmetricFeature::mean_sq, SymmetricFeature::m2};
};

SymmetricFeature parse_feature(const std::string& name);
std::string feature_name(SymmetricFeature f);
std::size_t feature_count(const BasisSpec& basis, std::size_t dim);
void eval_features(const BasisSpec& basis, const EmpiricalMeasure& mu, std::span<double> out);

struct LsmcOptions {
  double ridge_rel = 1e-10;        // ridge = ridge_rel * trace(A)/B on the normal matrix
  double condition_limit = 1e12;   // raise BasisDegeneracyError beyond this
  double picard_tol = 1e-8;        // second Picard pass when the first moves Y more than this
};

struct RegressionDiagnostics {
  std::size_t basis_size = 0;
  std::vector<double> residual_var;  // per step, predictive residual of the Y regression
  std::vector<double> condition_y;   // per step, normal-matrix condition before ridge
  std::vector<double> condition_z;
  std::size_t z_instability_flags = 0;  // count of |N Z_i| > 1e3 (1 + |X_i|)
  std::size_t picard_second_passes = 0;
};

// Solution of the backward system along stored forward paths. Y is stored per
// (time, path); Z is stored densely for the analytic method and as per-step
// regression coefficients for lsmc (evaluated against the batch on demand).
struct BackwardSolution {
  BackwardMethod method = BackwardMethod::analytic;
  std::vector<double> times;
  std::size_t path_count = 1, particles = 0, dim = 0, noise_dim = 0;
  std::vector<double> y;        // (K+1) x path_count, time-major
  std::vector<double> z_dense;  // analytic only: (K+1) x N x d

  // lsmc regression tables; z_coef maps the pooled features (1, x_i, xbar) to
  // sigma^T Z_i, z0_coef maps the symmetric features to the common-noise
  // integrand sum_i sigma0^T Z_i (diagnostic).
  std::vector<double> z_coef;   // K x (1+2d) x n
  std::vector<double> z0_coef;  // K x B_y x m
  BasisSpec basis;
  VolFn vol_sigma;
  RegressionDiagnostics diag;

  std::size_t steps() const { return times.size() - 1; }
  double y_at(std::size_t k, std::size_t p = 0) const { return y[k * path_count + p]; }
  std::span<const double> z_at(std::size_t k, std::size_t i) const {
    return {z_dense.data() + (k * particles + i) * dim, dim};
  }
  // lsmc: write Z_i for all particles of path p at step k (N x d doubles);
  // valid for k < steps().
  void z_block(const PathBatch& batch, std::size_t k, std::size_t p, std::span<double> out) const;
};

// Pointwise Feynman-Kac evaluation Y_k = v^N(t_k, X_k), Z_i = D_{x_i} v^N.
BackwardSolution evaluate_analytic(const AnalyticSolution& sol, const ParticlePaths& paths);

// Least-squares Monte Carlo backward recursion over the path batch,
//   Y_k = E[Y_{k+1} | F_k] + dt * (1/N) sum_i H_b(t_k, X_k^i, mu_k, Y_pred, N Z_k^i),
// with Z from the martingale-increment regression of Y_{k+1} dW_i/dt composed
// with the sigma pseudo-inverse, and one inner Picard pass for the implicit Y
// (a second when the first moves Y by more than picard_tol relative).
// Requires paths >= 10 * basis size.
//
// Both regressions use conditionally-mean-zero control variates that leave
// every conditional expectation unchanged: the Z target is centred by the
// fitted projection of Y_{k+1}, and the Y target is centred by the fitted
// martingale increment sum_i hhat_i.dW_i + hhat_0.dW_0 rebuilt from the Z
// coefficient tables. Without them the O(1/dt) variance of the raw products
// leaks into the driver through z^2 terms.
BackwardSolution solve_lsmc(const ModelSpec& spec, const PathBatch& batch, const BasisSpec& basis,
                            const LsmcOptions& options = {});

// The Ito-expansion correction distinguishing the lifted solution's BSDE from
// the particle BSDE: s_k = (1/2N^2) sum_i tr(S(t_k, X_i, mu_k) d2mu_v(X_i, X_i))
// with S = sigma sigma^T + sigma0 sigma0^T ("full") and S = sigma sigma^T
// ("idio"); both variants are reported with their time integrals.
struct CorrectionSeries {
  std::vector<double> times;
  std::vector<double> full;
  std::vector<double> idio;
  double integral_full = 0.0;
  double integral_idio = 0.0;
};

CorrectionSeries correction_term(const AnalyticSolution& sol, const ModelSpec& spec,
                                 const ParticlePaths& paths);

// CSV dump: k,t,path,Y,mean_abs_z,max_abs_z.
void dump_bsde_csv(const BackwardSolution& back, std::ostream& os);
void dump_bsde_csv(const BackwardSolution& back, const PathBatch& batch, std::ostream& os);

}  // namespace mfp

#endif  // MFP_BSDE_HPP
