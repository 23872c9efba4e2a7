#include "mfp/lq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mfp/errors.hpp"

namespace mfp {

namespace {

struct RiccatiState {
  double K, L, chi, IL;
};

// RHS in backward time tau = T - t.
RiccatiState rhs(const RiccatiState& s, const LqParams& p, double q_eff) {
  const double w = p.control_weight;
  RiccatiState d;
  d.K = q_eff + 2.0 * p.a * s.K - s.K * s.K / w;
  d.L = p.qbar + 2.0 * p.a * s.L - (2.0 * s.K * s.L + s.L * s.L) / w;
  d.chi = (p.sigma * p.sigma + p.sigma0 * p.sigma0) * s.K + p.sigma0 * p.sigma0 * s.L;
  d.IL = s.L;
  return d;
}

RiccatiState axpy(const RiccatiState& s, double h, const RiccatiState& d) {
  return {s.K + h * d.K, s.L + h * d.L, s.chi + h * d.chi, s.IL + h * d.IL};
}

}  // namespace

RiccatiSolution solve_riccati(const LqParams& params, std::size_t grid_size,
                              const RiccatiOptions& options) {
  if (grid_size < 256) throw UsageError("solve_riccati: grid_size must be >= 256");
  if (!(params.horizon > 0.0)) throw UsageError("solve_riccati: horizon must be positive");
  if (!(params.control_weight > 0.0))
    throw UsageError("solve_riccati: control-cost weight must be positive");

  const double T = params.horizon;
  const double h = T / static_cast<double>(grid_size);
  const double q_eff = options.negate_q_in_ode ? -params.q : params.q;

  std::vector<RiccatiState> nodes(grid_size + 1);
  nodes[0] = {params.g, params.gbar, 0.0, 0.0};  // tau = 0, i.e. t = T
  for (std::size_t j = 0; j < grid_size; ++j) {
    const RiccatiState& s = nodes[j];
    if (std::abs(s.K) > 1e8 || std::abs(s.L) > 1e8) {
      const double t_blow = T - h * static_cast<double>(j);
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "solve_riccati: horizon too long, Riccati blow-up near t=%.6f", t_blow);
      throw HorizonError(t_blow, buf);
    }
    const RiccatiState k1 = rhs(s, params, q_eff);
    const RiccatiState k2 = rhs(axpy(s, 0.5 * h, k1), params, q_eff);
    const RiccatiState k3 = rhs(axpy(s, 0.5 * h, k2), params, q_eff);
    const RiccatiState k4 = rhs(axpy(s, h, k3), params, q_eff);
    nodes[j + 1] = {s.K + h / 6.0 * (k1.K + 2.0 * k2.K + 2.0 * k3.K + k4.K),
                    s.L + h / 6.0 * (k1.L + 2.0 * k2.L + 2.0 * k3.L + k4.L),
                    s.chi + h / 6.0 * (k1.chi + 2.0 * k2.chi + 2.0 * k3.chi + k4.chi),
                    s.IL + h / 6.0 * (k1.IL + 2.0 * k2.IL + 2.0 * k3.IL + k4.IL)};
  }
  const RiccatiState& last = nodes[grid_size];
  if (std::abs(last.K) > 1e8 || std::abs(last.L) > 1e8)
    throw HorizonError(0.0, "solve_riccati: horizon too long, Riccati blow-up near t=0");

  RiccatiSolution sol;
  sol.params_ = params;
  const std::size_t count = grid_size + 1;
  sol.t_.resize(count);
  sol.K_.resize(count);
  sol.L_.resize(count);
  sol.chi_.resize(count);
  sol.IL_.resize(count);
  sol.dK_.resize(count);
  sol.dL_.resize(count);
  sol.dchi_.resize(count);
  sol.dIL_.resize(count);
  for (std::size_t j = 0; j < count; ++j) {
    // node j of the backward sweep sits at t = T - j*h; store ascending in t
    const std::size_t idx = grid_size - j;
    sol.t_[idx] = T - h * static_cast<double>(j);
    sol.K_[idx] = nodes[j].K;
    sol.L_[idx] = nodes[j].L;
    sol.chi_[idx] = nodes[j].chi;
    sol.IL_[idx] = nodes[j].IL;
    const RiccatiState d = rhs(nodes[j], params, q_eff);
    sol.dK_[idx] = -d.K;  // d/dt = -d/dtau
    sol.dL_[idx] = -d.L;
    sol.dchi_[idx] = -d.chi;
    sol.dIL_[idx] = -d.IL;
  }
  sol.t_.front() = 0.0;
  sol.t_.back() = T;
  return sol;
}

double RiccatiSolution::interpolate(const std::vector<double>& f, const std::vector<double>& df,
                                    double t) const {
  const double T = params_.horizon;
  if (!(t >= 0.0 && t <= T))
    throw UsageError("RiccatiSolution: evaluation time outside [0,T]");
  const std::size_t cells = t_.size() - 1;
  const double h = T / static_cast<double>(cells);
  std::size_t j = std::min(static_cast<std::size_t>(t / h), cells - 1);
  const double s = (t - t_[j]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  return h00 * f[j] + h10 * h * df[j] + h01 * f[j + 1] + h11 * h * df[j + 1];
}

double RiccatiSolution::coef_K(double t) const { return interpolate(K_, dK_, t); }
double RiccatiSolution::coef_L(double t) const { return interpolate(L_, dL_, t); }
double RiccatiSolution::coef_chi(double t) const { return interpolate(chi_, dchi_, t); }
double RiccatiSolution::integral_L(double t) const { return interpolate(IL_, dIL_, t); }

double RiccatiSolution::coef_cN(double t, std::size_t n) const {
  return coef_chi(t) +
         params_.sigma * params_.sigma * integral_L(t) / static_cast<double>(n);
}

double RiccatiSolution::v(double t, const EmpiricalMeasure& mu) const {
  const double mbar = mu.mean()[0];
  return coef_K(t) * mu.second_moment() + coef_L(t) * mbar * mbar + coef_chi(t);
}

double RiccatiSolution::dmu_v(double t, const EmpiricalMeasure& mu, double x) const {
  return 2.0 * coef_K(t) * x + 2.0 * coef_L(t) * mu.mean()[0];
}

double RiccatiSolution::dx_dmu_v(double t) const { return 2.0 * coef_K(t); }
double RiccatiSolution::d2mu_v(double t) const { return 2.0 * coef_L(t); }

double RiccatiSolution::v_n(double t, std::span<const double> xs) const {
  const std::size_t n = xs.size();
  if (n == 0) throw UsageError("RiccatiSolution::v_n: empty configuration");
  const EmpiricalMeasure mu(xs, 1);
  const double mbar = mu.mean()[0];
  return coef_K(t) * mu.second_moment() + coef_L(t) * mbar * mbar + coef_cN(t, n);
}

double RiccatiSolution::grad_v_n(double t, std::span<const double> xs, std::size_t i) const {
  const std::size_t n = xs.size();
  if (i >= n) throw UsageError("RiccatiSolution::grad_v_n: particle index out of range");
  const EmpiricalMeasure mu(xs, 1);
  return (2.0 * coef_K(t) * xs[i] + 2.0 * coef_L(t) * mu.mean()[0]) / static_cast<double>(n);
}

namespace {

// Closed-form LQ Hamiltonian integrand (r = 0):
//   H(t,x,mu,y,z) = a x z - z^2/(4w) + q x^2 + qbar mean(mu)^2
double lq_hamiltonian(const LqParams& p, double x, double mbar, double z) {
  return p.a * x * z - z * z / (4.0 * p.control_weight) + p.q * x * x + p.qbar * mbar * mbar;
}

double dt_step(double t, double T) {
  double h = 1e-5;
  h = std::min(h, 0.5 * t);
  h = std::min(h, 0.5 * (T - t));
  return h;
}

}  // namespace

double pde_residual(const RiccatiSolution& sol, double t, const EmpiricalMeasure& mu) {
  const LqParams& p = sol.params();
  const double T = p.horizon;
  if (!(t > 0.0 && t < T)) throw UsageError("pde_residual: t must lie in the open interval (0,T)");
  const double h = dt_step(t, T);
  const double dt_v = (sol.v(t + h, mu) - sol.v(t - h, mu)) / (2.0 * h);

  const double mbar = mu.mean()[0];
  const double s2 = p.sigma * p.sigma, s02 = p.sigma0 * p.sigma0;
  const std::size_t n = mu.size();
  double h_int = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double x = mu.atom(j)[0];
    const double z = sol.dmu_v(t, mu, x);
    h_int += lq_hamiltonian(p, x, mbar, z) + 0.5 * (s2 + s02) * sol.dx_dmu_v(t);
  }
  h_int /= static_cast<double>(n);
  // (1/2) int int tr(sigma0 sigma0^T d2mu_v) dmu dmu
  const double cross = 0.5 * s02 * sol.d2mu_v(t);
  return std::abs(dt_v + h_int + cross);
}

double finite_dim_residual(const RiccatiSolution& sol, double t, std::span<const double> xs) {
  const LqParams& p = sol.params();
  const double T = p.horizon;
  if (!(t > 0.0 && t < T))
    throw UsageError("finite_dim_residual: t must lie in the open interval (0,T)");
  const std::size_t n = xs.size();
  if (n == 0) throw UsageError("finite_dim_residual: empty configuration");
  const double h = dt_step(t, T);
  const double dt_vn = (sol.v_n(t + h, xs) - sol.v_n(t - h, xs)) / (2.0 * h);

  const EmpiricalMeasure mu(xs, 1);
  const double mbar = mu.mean()[0];
  double h_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = static_cast<double>(n) * sol.grad_v_n(t, xs, i);
    h_sum += lq_hamiltonian(p, xs[i], mbar, z);
  }
  h_sum /= static_cast<double>(n);

  const double s2 = p.sigma * p.sigma, s02 = p.sigma0 * p.sigma0;
  const double K = sol.coef_K(t), L = sol.coef_L(t);
  const double nd = static_cast<double>(n);
  const double diag2 = 2.0 * K / nd + 2.0 * L / (nd * nd);   // D^2_{x_i x_i} v^N
  const double off2 = 2.0 * L / (nd * nd);                   // D^2_{x_i x_j} v^N, i != j
  const double trace = 0.5 * (nd * (s2 + s02) * diag2 + nd * (nd - 1.0) * s02 * off2);
  return std::abs(dt_vn + h_sum + trace);
}

LqModel make_lq_model(const LqParams& params, const AffineDrift& drift, const GaussianLaw& mu0,
                      std::size_t riccati_grid, const RiccatiOptions& options) {
  LqModel model;
  model.params = params;
  model.drift = drift;
  model.mu0 = mu0;
  model.spec = lq_model_spec(params, drift, mu0);
  model.riccati =
      std::make_shared<const RiccatiSolution>(solve_riccati(params, riccati_grid, options));

  const auto ric = model.riccati;
  AnalyticSolution sol;
  sol.v = [ric](double t, const EmpiricalMeasure& mu) { return ric->v(t, mu); };
  sol.dmu_v = [ric](double t, const EmpiricalMeasure& mu, std::span<const double> x,
                    std::span<double> out) { out[0] = ric->dmu_v(t, mu, x[0]); };
  sol.dx_dmu_v = [ric](double t, const EmpiricalMeasure&, std::span<const double>,
                       std::span<double> out) { out[0] = ric->dx_dmu_v(t); };
  sol.d2mu_v = [ric](double t, const EmpiricalMeasure&, std::span<const double>,
                     std::span<const double>, std::span<double> out) { out[0] = ric->d2mu_v(t); };
  sol.v_n = [ric](double t, std::span<const double> xs) { return ric->v_n(t, xs); };
  sol.grad_v_n = [ric](double t, std::span<const double> xs, std::size_t i,
                       std::span<double> out) { out[0] = ric->grad_v_n(t, xs, i); };
  sol.v_on_moments = [ric](double t, std::span<const double> law_mean, double law_m2) {
    return ric->coef_K(t) * law_m2 + ric->coef_L(t) * law_mean[0] * law_mean[0] +
           ric->coef_chi(t);
  };
  sol.dmu_v_on_moments = [ric](double t, std::span<const double> law_mean,
                               std::span<const double> x, std::span<double> out) {
    out[0] = 2.0 * ric->coef_K(t) * x[0] + 2.0 * ric->coef_L(t) * law_mean[0];
  };
  model.solution = std::move(sol);
  return model;
}

ResidualGate riccati_residual_gate(const RiccatiSolution& sol) {
  const NoiseField rng(0x52494343u);  // fixed gate seed
  const double T = sol.params().horizon;
  ResidualGate gate;
  for (std::uint32_t q = 0; q < 20; ++q) {
    std::vector<double> atoms(16);
    for (std::size_t a = 0; a < atoms.size(); ++a)
      atoms[a] = 0.5 + 1.5 * rng.normal(NoiseField::kKindProbe, q, 0, static_cast<std::uint32_t>(a));
    const EmpiricalMeasure mu(atoms, 1);
    std::vector<double> config(8);
    for (std::size_t a = 0; a < config.size(); ++a)
      config[a] =
          0.5 + 1.5 * rng.normal(NoiseField::kKindProbe, q, 1, static_cast<std::uint32_t>(a));
    for (int j = 1; j <= 9; ++j) {
      const double t = T * static_cast<double>(j) / 10.0;
      gate.max_pde_residual = std::max(gate.max_pde_residual, pde_residual(sol, t, mu));
      gate.max_finite_dim_residual =
          std::max(gate.max_finite_dim_residual, finite_dim_residual(sol, t, config));
    }
  }
  gate.pass = gate.max_pde_residual <= gate.tolerance &&
              gate.max_finite_dim_residual <= gate.tolerance;
  return gate;
}

void dump_riccati_csv(const RiccatiSolution& sol, std::span<const std::size_t> n_list,
                      std::ostream& os) {
  os << "t,K,L,chi";
  for (const std::size_t n : n_list) os << ",c_N" << n;
  os << "\n";
  char buf[64];
  const auto grid = sol.grid();
  for (const double t : grid) {
    std::snprintf(buf, sizeof(buf), "%.17g", t);
    os << buf;
    for (const double val : {sol.coef_K(t), sol.coef_L(t), sol.coef_chi(t)}) {
      std::snprintf(buf, sizeof(buf), ",%.17g", val);
      os << buf;
    }
    for (const std::size_t n : n_list) {
      std::snprintf(buf, sizeof(buf), ",%.17g", sol.coef_cN(t, n));
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace mfp
