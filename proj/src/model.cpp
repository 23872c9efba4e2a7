#include "mfp/model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfp/errors.hpp"

namespace mfp {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::string describe_point(double t, std::span<const double> x, double a) {
  std::ostringstream os;
  os << "t=" << t << ", a=" << a << ", x=(";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << ")";
  return os.str();
}

}  // namespace

DriverFn build_control_driver(ControlDrift beta, RunningCost f, double r, Minimizer minimizer,
                              std::size_t d) {
  return [beta = std::move(beta), f = std::move(f), r, minimizer = std::move(minimizer), d](
             double t, std::span<const double> x, const EmpiricalMeasure& mu, double y,
             std::span<const double> z) -> double {
    thread_local std::vector<double> bvec;
    bvec.resize(d);
    const double a_star = minimizer(t, x, mu, z);
    beta(t, x, mu, a_star, bvec);
    const double cost = f(x, mu, a_star);
    double bz = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::isfinite(bvec[i]))
        throw EvaluationError("control drift returned non-finite value at " +
                              describe_point(t, x, a_star));
      bz += bvec[i] * z[i];
    }
    if (!std::isfinite(cost))
      throw EvaluationError("running cost returned non-finite value at " +
                            describe_point(t, x, a_star));
    return -r * y + bz + cost;
  };
}

Minimizer make_grid_minimizer(ControlDrift beta, RunningCost f, double lo, double hi,
                              std::size_t points) {
  if (points < 2 || !(hi > lo)) throw UsageError("make_grid_minimizer: bad grid");
  return [beta = std::move(beta), f = std::move(f), lo, hi, points](
             double t, std::span<const double> x, const EmpiricalMeasure& mu,
             std::span<const double> z) -> double {
    thread_local std::vector<double> bvec;
    bvec.resize(z.size());
    double best_a = lo;
    double best = std::numeric_limits<double>::infinity();
    const double h = (hi - lo) / static_cast<double>(points - 1);
    for (std::size_t k = 0; k < points; ++k) {
      const double a = lo + h * static_cast<double>(k);
      beta(t, x, mu, a, bvec);
      const double val = dot(bvec, z) + f(x, mu, a);
      if (val < best) {
        best = val;
        best_a = a;
      }
    }
    return best_a;
  };
}

Minimizer make_finite_set_minimizer(ControlDrift beta, RunningCost f,
                                    std::vector<double> actions) {
  if (actions.empty()) throw UsageError("make_finite_set_minimizer: empty action set");
  return [beta = std::move(beta), f = std::move(f), actions = std::move(actions)](
             double t, std::span<const double> x, const EmpiricalMeasure& mu,
             std::span<const double> z) -> double {
    thread_local std::vector<double> bvec;
    bvec.resize(z.size());
    double best_a = actions.front();
    double best = std::numeric_limits<double>::infinity();
    for (const double a : actions) {
      beta(t, x, mu, a, bvec);
      const double val = dot(bvec, z) + f(x, mu, a);
      if (val < best) {
        best = val;
        best_a = a;
      }
    }
    return best_a;
  };
}

namespace {

struct Probe {
  double t;
  std::vector<double> x;
  EmpiricalMeasure mu;
};

Probe draw_probe(const NoiseField& rng, std::uint32_t stream, std::size_t d, double horizon,
                 std::uint32_t salt) {
  constexpr std::size_t kAtoms = 16;
  Probe p{0.0, std::vector<double>(d), EmpiricalMeasure(std::vector<double>(kAtoms, 0.0), 1)};
  p.t = horizon * rng.uniform(NoiseField::kKindProbe, stream, salt, 0);
  for (std::size_t c = 0; c < d; ++c)
    p.x[c] = 3.0 * rng.normal(NoiseField::kKindProbe, stream, salt + 1, static_cast<std::uint32_t>(c));
  std::vector<double> atoms(kAtoms * d);
  for (std::size_t i = 0; i < atoms.size(); ++i)
    atoms[i] = rng.normal(NoiseField::kKindProbe, stream, salt + 2, static_cast<std::uint32_t>(i));
  p.mu = EmpiricalMeasure(atoms, d);
  return p;
}

}  // namespace

AssumptionReport validate_assumptions(const ModelSpec& spec, std::size_t probe_count,
                                      const NoiseField& rng, const AssumptionCaps& caps) {
  if (probe_count < 2) throw UsageError("validate_assumptions: probe_count must be >= 2");
  if (!spec.drift_b || !spec.vol_sigma || !spec.vol_sigma0 || !spec.driver_Hb || !spec.terminal_G)
    throw UsageError("validate_assumptions: spec callables must be set");

  AssumptionReport rep;
  const std::size_t d = spec.d;
  std::vector<double> b1v(d), b2v(d), s1(d * spec.n), s2(d * spec.n), s01(d * spec.m),
      s02(d * spec.m), z1(d), z2(d);

  auto note_violation = [&rep](const std::string& msg) {
    rep.violations = true;
    rep.notes.push_back(msg);
  };

  for (std::size_t p = 0; p < probe_count; ++p) {
    const auto stream = static_cast<std::uint32_t>(p);
    Probe a = draw_probe(rng, stream, d, spec.horizon_T, 0);
    Probe b = draw_probe(rng, stream, d, spec.horizon_T, 8);
    b.t = a.t;
    // three flavours: x varies / mu varies / both vary
    if (p % 3 == 0) b.mu = a.mu;
    if (p % 3 == 1) b.x = a.x;

    const double w2 = wasserstein2(a.mu, b.mu).value;
    const double dx = dist(a.x, b.x);
    const double denom1 = dx + w2;

    spec.drift_b(a.t, a.x, a.mu, b1v);
    spec.drift_b(b.t, b.x, b.mu, b2v);
    spec.vol_sigma(a.t, a.x, a.mu, s1);
    spec.vol_sigma(b.t, b.x, b.mu, s2);
    spec.vol_sigma0(a.t, a.x, a.mu, s01);
    spec.vol_sigma0(b.t, b.x, b.mu, s02);
    for (const double val : b1v)
      if (!std::isfinite(val)) note_violation("drift non-finite at probe " + std::to_string(p));
    if (denom1 > 1e-12) {
      rep.lip_b = std::max(rep.lip_b, dist(b1v, b2v) / denom1);
      rep.lip_sigma = std::max(rep.lip_sigma, dist(s1, s2) / denom1);
      rep.lip_sigma0 = std::max(rep.lip_sigma0, dist(s01, s02) / denom1);
    }

    // (ii) invertibility of sigma sigma^T and boundedness proxies
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> sig(s1.data(), static_cast<Eigen::Index>(d),
                                 static_cast<Eigen::Index>(spec.n));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sig);
    const double sv_min = svd.singularValues().minCoeff();
    rep.max_sigma_norm = std::max(rep.max_sigma_norm, sig.norm());
    if (sv_min < caps.min_sigma_sv || spec.n < d) {
      rep.sigma_invertible = false;
      std::ostringstream os;
      os << "sigma*sigma^T numerically singular at t=" << a.t << ", probe " << p;
      note_violation(os.str());
    } else {
      rep.max_sigma_pinv_norm = std::max(rep.max_sigma_pinv_norm, 1.0 / sv_min);
    }

    // (iv) Lipschitz of H_b in (y,z) at frozen (t,x,mu)
    const double y1 = rng.normal(NoiseField::kKindProbe, stream, 20, 0);
    const double y2 = rng.normal(NoiseField::kKindProbe, stream, 20, 1);
    for (std::size_t c = 0; c < d; ++c) {
      z1[c] = rng.normal(NoiseField::kKindProbe, stream, 21, static_cast<std::uint32_t>(c));
      z2[c] = rng.normal(NoiseField::kKindProbe, stream, 22, static_cast<std::uint32_t>(c));
    }
    const double h11 = spec.driver_Hb(a.t, a.x, a.mu, y1, z1);
    const double h12 = spec.driver_Hb(a.t, a.x, a.mu, y2, z2);
    const double denom_yz = std::abs(y1 - y2) + dist(z1, z2);
    if (denom_yz > 1e-12)
      rep.lip_hb_yz = std::max(rep.lip_hb_yz, std::abs(h11 - h12) / denom_yz);

    // (iv) locally Lipschitz in (x,mu) at frozen (y,z)
    const double h21 = spec.driver_Hb(a.t, a.x, a.mu, y1, z1);
    const double h22 = spec.driver_Hb(a.t, b.x, b.mu, y1, z1);
    const double growth = 1.0 + norm(a.x) + norm(b.x) + a.mu.second_moment_norm() +
                          b.mu.second_moment_norm();
    if (denom1 > 1e-12)
      rep.lip_hb_xmu = std::max(rep.lip_hb_xmu, std::abs(h21 - h22) / (growth * denom1));

    // (v) locally Lipschitz terminal condition
    const double gden = (a.mu.second_moment_norm() + b.mu.second_moment_norm()) * w2;
    if (gden > 1e-12)
      rep.lip_g = std::max(rep.lip_g, std::abs(spec.terminal_G(a.mu) - spec.terminal_G(b.mu)) / gden);
  }

  // (iii) moment of mu0 (q = 2) and time-integrability of coefficients at (t,0,delta_0)
  if (spec.mu0_sampler) {
    constexpr std::size_t kSample = 4096;
    std::vector<std::uint32_t> streams(kSample);
    for (std::size_t i = 0; i < kSample; ++i) streams[i] = static_cast<std::uint32_t>(i);
    InitNoise noise(rng, streams);
    std::vector<double> atoms(kSample * d);
    spec.mu0_sampler(kSample, noise, atoms);
    double acc = 0.0;
    for (std::size_t i = 0; i < kSample; ++i) {
      const double r = norm(std::span<const double>(atoms).subspan(i * d, d));
      acc += std::pow(r, 8.0);
    }
    rep.mu0_norm_4q = std::pow(acc / static_cast<double>(kSample), 1.0 / 8.0);
  }
  {
    const std::vector<double> zero(d, 0.0);
    const EmpiricalMeasure delta0(zero, d);
    const std::size_t steps = 64;
    double integral = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = spec.horizon_T * (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
      spec.drift_b(t, zero, delta0, b1v);
      spec.vol_sigma(t, zero, delta0, s1);
      spec.vol_sigma0(t, zero, delta0, s01);
      integral += (std::pow(norm(b1v), 8.0) + std::pow(norm(s1), 8.0) + std::pow(norm(s01), 8.0)) *
                  spec.horizon_T / static_cast<double>(steps);
    }
    rep.coeff_time_integral_4q = integral;
    if (!std::isfinite(integral)) {
      rep.violations = true;
      rep.notes.push_back("coefficient time integral at (t,0,delta_0) non-finite");
    }
  }

  for (const double modulus :
       {rep.lip_b, rep.lip_sigma, rep.lip_sigma0, rep.lip_hb_yz, rep.lip_hb_xmu, rep.lip_g}) {
    if (!(modulus <= caps.modulus_cap)) {
      rep.violations = true;
      rep.notes.push_back("observed modulus exceeds cap");
      break;
    }
  }
  if (rep.max_sigma_norm > caps.sigma_norm_cap || rep.max_sigma_pinv_norm > caps.sigma_norm_cap) {
    rep.violations = true;
    rep.notes.push_back("sigma or its pseudo-inverse exceeds boundedness cap");
  }
  return rep;
}

double observed_growth_constant(const AnalyticSolution& sol, std::size_t d, double horizon,
                                std::size_t probe_count, const NoiseField& rng) {
  if (!sol.dmu_v || !sol.d2mu_v) throw UsageError("observed_growth_constant: derivatives missing");
  double big = 0.0;
  std::vector<double> grad(d), hess(d * d);
  for (std::size_t p = 0; p < probe_count; ++p) {
    Probe pr = draw_probe(rng, static_cast<std::uint32_t>(p), d, horizon, 40);
    sol.dmu_v(pr.t, pr.mu, pr.x, grad);
    sol.d2mu_v(pr.t, pr.mu, pr.x, pr.x, hess);
    const double denom = 1.0 + norm(pr.x) + pr.mu.second_moment_norm();
    big = std::max(big, norm(grad) / denom);
    big = std::max(big, norm(hess));
  }
  return big;
}

ModelSpec lq_model_spec(const LqParams& params, const AffineDrift& drift, const GaussianLaw& mu0) {
  if (!(params.control_weight > 0.0))
    throw UsageError("lq_model_spec: control-cost weight must be positive "
                     "(the driver infimum would be -infinity)");
  if (!(params.horizon > 0.0)) throw UsageError("lq_model_spec: horizon must be positive");
  if (!(mu0.var >= 0.0)) throw UsageError("lq_model_spec: mu0 variance must be non-negative");

  const double a = params.a, q = params.q, qbar = params.qbar, w = params.control_weight;
  const double sigma = params.sigma, sigma0 = params.sigma0;
  const double g = params.g, gbar = params.gbar;

  ControlDrift beta = [a](double, std::span<const double> x, const EmpiricalMeasure&,
                          double action, std::span<double> out) { out[0] = a * x[0] + action; };
  RunningCost cost = [q, qbar, w](std::span<const double> x, const EmpiricalMeasure& mu,
                                  double action) {
    const double mbar = mu.mean()[0];
    return q * x[0] * x[0] + qbar * mbar * mbar + w * action * action;
  };
  Minimizer argmin = [w](double, std::span<const double>, const EmpiricalMeasure&,
                         std::span<const double> z) { return -z[0] / (2.0 * w); };

  ModelSpec spec;
  spec.d = spec.n = spec.m = 1;
  spec.horizon_T = params.horizon;
  spec.drift_b = [drift](double, std::span<const double> x, const EmpiricalMeasure& mu,
                         std::span<double> out) {
    out[0] = drift.b0 + drift.b1 * x[0] + drift.b2 * mu.mean()[0];
  };
  spec.vol_sigma = [sigma](double, std::span<const double>, const EmpiricalMeasure&,
                           std::span<double> out) { out[0] = sigma; };
  spec.vol_sigma0 = [sigma0](double, std::span<const double>, const EmpiricalMeasure&,
                             std::span<double> out) { out[0] = sigma0; };
  spec.driver_H = build_control_driver(std::move(beta), std::move(cost), 0.0, std::move(argmin), 1);
  spec.driver_Hb = [H = spec.driver_H, drift](double t, std::span<const double> x,
                                              const EmpiricalMeasure& mu, double y,
                                              std::span<const double> z) {
    const double b = drift.b0 + drift.b1 * x[0] + drift.b2 * mu.mean()[0];
    return H(t, x, mu, y, z) - b * z[0];
  };
  spec.terminal_G = [g, gbar](const EmpiricalMeasure& mu) {
    const double mbar = mu.mean()[0];
    return g * mu.second_moment() + gbar * mbar * mbar;
  };
  const double sd = std::sqrt(mu0.var);
  spec.mu0_sampler = [mean = mu0.mean, sd](std::size_t count, const InitNoise& noise,
                                           std::span<double> out) {
    for (std::size_t i = 0; i < count; ++i) out[i] = mean + sd * noise.normal(i, 0);
  };
  spec.affine_drift = drift;
  spec.mu0_law = mu0;
  spec.const_sigma = sigma;
  spec.const_sigma0 = sigma0;
  return spec;
}

}  // namespace mfp
