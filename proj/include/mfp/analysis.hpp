#ifndef MFP_ANALYSIS_HPP
#define MFP_ANALYSIS_HPP

#include <span>
#include <utility>
#include <vector>

#include "mfp/bsde.hpp"
#include "mfp/model.hpp"
#include "mfp/sim.hpp"

namespace mfp {

// Pathwise error functionals against the limiting solution:
//   err_y_sup = sup_k |Y_k - v(t_k, mu_bar(X_k))|
//   err_z_int = (1/N) sum_i int_0^T |N Z_i - dmu_v(t, mu_bar)(X_i)|^2 dt
// The time integral uses the trapezoid rule on the grid; for lsmc solutions
// the terminal node carries no Z, so the last interval is integrated with the
// left value held constant.
struct PathwiseErrors {
  double err_y_sup = 0.0;
  double err_z_int = 0.0;
};

PathwiseErrors pathwise_errors(const BackwardSolution& back, const AnalyticSolution& sol,
                               const ParticlePaths& paths);
std::vector<PathwiseErrors> pathwise_errors(const BackwardSolution& back,
                                            const AnalyticSolution& sol, const PathBatch& batch);

// One Monte Carlo replication of the coupled (particle system, backward
// solution, limit copies) triple used by the weak/chaos estimates.
struct Replication {
  ParticlePaths paths;
  BackwardSolution back;  // analytic evaluation along `paths`
  LimitPaths limit;
};

struct WeakChaosResult {
  bool available = false;
  double e_y_weak = 0.0;   // sup_t |E[Y] - E[v(t, conditional law)]|
  double e_z_weak = 0.0;
  double chaos_y = 0.0;    // sup_t |E[v(t, mu_bar)] - E[v(t, conditional law)]|
  double chaos_z = 0.0;
  double se_y_weak = 0.0;  // standard error of the sup-attaining mean difference
  double se_chaos_y = 0.0;
  double mean_pathwise_y = 0.0;  // E[err_y_sup], for the decomposition check
  double se_mean_pathwise_y = 0.0;
  bool decomposition_y_ok = false;  // E_Y <= E[err_y_sup] + chaos_y within 3 SE
  std::size_t replications = 0;
};

// Monte Carlo estimates over a replication batch; limit copies must share the
// common noise of their paired particle run. Requires the analytic backward
// method and the moment-form evaluators of the solution; otherwise the result
// is marked unavailable.
WeakChaosResult weak_and_chaos_errors(std::span<const Replication> reps,
                                      const AnalyticSolution& sol);

// Componentwise-max discrepancy between the central difference of
// x_i -> v(t, mu_bar(x)) and (1/N) dmu_v(t, mu_bar(x))(x_i).
double lift_derivative_check(const AnalyticSolution& sol, double t, std::span<const double> config,
                             std::size_t dim, std::size_t i, double h);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n_points = 0;
  std::size_t excluded = 0;  // non-positive errors dropped before the fit
};

// Least squares of log(error) on log(N). Throws FitError when fewer than
// three usable points remain.
RateFit fit_rate(std::span<const std::pair<double, double>> points);

}  // namespace mfp

#endif  // MFP_ANALYSIS_HPP
