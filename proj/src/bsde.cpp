#include "mfp/bsde.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "mfp/errors.hpp"

namespace mfp {

SymmetricFeature parse_feature(const std::string& name) {
  if (name == "1" || name == "one") return SymmetricFeature::one;
  if (name == "xbar" || name == "mean") return SymmetricFeature::mean;
  if (name == "m2") return SymmetricFeature::m2;
  if (name == "xbar2" || name == "mean_sq") return SymmetricFeature::mean_sq;
  if (name == "xbar_m2" || name == "mean_m2") return SymmetricFeature::mean_m2;
  if (name == "m2_2" || name == "m2_sq") return SymmetricFeature::m2_sq;
  throw UsageError("unknown basis feature: " + name);
}

std::string feature_name(SymmetricFeature f) {
  switch (f) {
    case SymmetricFeature::one: return "1";
    case SymmetricFeature::mean: return "xbar";
    case SymmetricFeature::m2: return "m2";
    case SymmetricFeature::mean_sq: return "xbar2";
    case SymmetricFeature::mean_m2: return "xbar_m2";
    case SymmetricFeature::m2_sq: return "m2_2";
  }
  return "?";
}

std::size_t feature_count(const BasisSpec& basis, std::size_t dim) {
  std::size_t count = 0;
  for (const auto f : basis.features) {
    switch (f) {
      case SymmetricFeature::one:
      case SymmetricFeature::m2:
      case SymmetricFeature::m2_sq: count += 1; break;
      case SymmetricFeature::mean:
      case SymmetricFeature::mean_m2: count += dim; break;
      case SymmetricFeature::mean_sq: count += dim * (dim + 1) / 2; break;
    }
  }
  return count;
}

void eval_features(const BasisSpec& basis, const EmpiricalMeasure& mu, std::span<double> out) {
  const auto mean = mu.mean();
  const double m2 = mu.second_moment();
  std::size_t at = 0;
  for (const auto f : basis.features) {
    switch (f) {
      case SymmetricFeature::one: out[at++] = 1.0; break;
      case SymmetricFeature::m2: out[at++] = m2; break;
      case SymmetricFeature::m2_sq: out[at++] = m2 * m2; break;
      case SymmetricFeature::mean:
        for (const double mc : mean) out[at++] = mc;
        break;
      case SymmetricFeature::mean_m2:
        for (const double mc : mean) out[at++] = mc * m2;
        break;
      case SymmetricFeature::mean_sq:
        for (std::size_t a = 0; a < mean.size(); ++a)
          for (std::size_t b = a; b < mean.size(); ++b) out[at++] = mean[a] * mean[b];
        break;
    }
  }
}

namespace {

// z = (sigma sigma^T)^{-1} sigma h, the pseudo-inverse geometry of the
// martingale-increment regression.
void apply_sigma_pinv(std::span<const double> sigma, std::size_t d, std::size_t n,
                      std::span<const double> h, std::span<double> z) {
  if (d == 1) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      num += sigma[j] * h[j];
      den += sigma[j] * sigma[j];
    }
    if (!(den > 1e-28))
      throw InvertibilityError("sigma sigma^T numerically singular in Z extraction");
    z[0] = num / den;
    return;
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> sig(sigma.data(), static_cast<Eigen::Index>(d),
                               static_cast<Eigen::Index>(n));
  Eigen::Map<const Eigen::VectorXd> hv(h.data(), static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd gram = sig * sig.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (!lu.isInvertible())
    throw InvertibilityError("sigma sigma^T numerically singular in Z extraction");
  Eigen::Map<Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(d));
  zv = lu.solve(sig * hv);
}

double condition_of(const Eigen::MatrixXd& gram) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

BackwardSolution evaluate_analytic(const AnalyticSolution& sol, const ParticlePaths& paths) {
  if (!sol.v_n || !sol.grad_v_n)
    throw UnsupportedModelError("evaluate_analytic: analytic solution does not provide v_n");
  BackwardSolution out;
  out.method = BackwardMethod::analytic;
  out.times = paths.times;
  out.path_count = 1;
  out.particles = paths.particles;
  out.dim = paths.dim;
  out.noise_dim = paths.noise_dim;
  const std::size_t count = paths.times.size();
  out.y.resize(count);
  out.z_dense.resize(count * paths.particles * paths.dim);
  for (std::size_t k = 0; k < count; ++k) {
    const auto xs = paths.step_states(k);
    out.y[k] = sol.v_n(paths.times[k], xs);
    for (std::size_t i = 0; i < paths.particles; ++i)
      sol.grad_v_n(paths.times[k], xs, i,
                   std::span<double>(out.z_dense.data() + (k * paths.particles + i) * paths.dim,
                                     paths.dim));
  }
  return out;
}

void BackwardSolution::z_block(const PathBatch& batch, std::size_t k, std::size_t p,
                               std::span<double> out) const {
  if (method != BackwardMethod::lsmc)
    throw UsageError("z_block: only meaningful for the lsmc method");
  if (k >= steps()) throw UsageError("z_block: no regression at the terminal node");
  const std::size_t d = dim, n = noise_dim, N = particles;
  const std::size_t bz = 1 + 2 * d;
  const EmpiricalMeasure mu(batch.config(k, p), d);
  const auto mean = mu.mean();
  std::vector<double> psi(bz), hhat(n), sigma(d * n);
  const double* coef = z_coef.data() + k * bz * n;
  for (std::size_t i = 0; i < N; ++i) {
    const auto xi = batch.state(k, p, i);
    psi[0] = 1.0;
    for (std::size_t c = 0; c < d; ++c) psi[1 + c] = xi[c];
    for (std::size_t c = 0; c < d; ++c) psi[1 + d + c] = mean[c];
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t b = 0; b < bz; ++b) s += coef[b * n + j] * psi[b];
      hhat[j] = s;
    }
    vol_sigma(times[k], xi, mu, sigma);
    apply_sigma_pinv(sigma, d, n, hhat, out.subspan(i * d, d));
  }
}

BackwardSolution solve_lsmc(const ModelSpec& spec, const PathBatch& batch, const BasisSpec& basis,
                            const LsmcOptions& options) {
  const std::size_t P = batch.paths, N = batch.particles, K = batch.steps();
  const std::size_t d = batch.dim, n = batch.noise_dim, m = batch.common_dim;
  const std::size_t by = feature_count(basis, d);
  const std::size_t bz = 1 + 2 * d;
  if (by == 0) throw UsageError("solve_lsmc: empty basis");
  if (P < 10 * by)
    throw UsageError("solve_lsmc: need at least 10x basis-size many paths");

  BackwardSolution out;
  out.method = BackwardMethod::lsmc;
  out.times = batch.times;
  out.path_count = P;
  out.particles = N;
  out.dim = d;
  out.noise_dim = n;
  out.basis = basis;
  out.vol_sigma = spec.vol_sigma;
  out.y.resize((K + 1) * P);
  out.z_coef.assign(K * bz * n, 0.0);
  out.z0_coef.assign(K * by * m, 0.0);
  out.diag.basis_size = by;
  out.diag.residual_var.assign(K, 0.0);
  out.diag.condition_y.assign(K, 0.0);
  out.diag.condition_z.assign(K, 0.0);

  const double dt = batch.times[1] - batch.times[0];
  const double sqrt_dt = std::sqrt(dt);
  const NoiseField rng(batch.seed);

  // terminal layer
  {
    std::vector<EmpiricalMeasure> mu_term;
    mu_term.reserve(P);
    for (std::size_t p = 0; p < P; ++p) {
      mu_term.emplace_back(batch.config(K, p), d);
      out.y[K * P + p] = spec.terminal_G(mu_term.back());
    }
  }

  Eigen::MatrixXd gram_z(bz, bz), gram_y(by, by);
  Eigen::MatrixXd rhs_z(bz, n), rhs_c(by, 1), rhs_z0(by, m), rhs_e(by, 1);
  Eigen::VectorXd psi(bz);
  std::vector<double> phi_store(P * by);
  std::vector<double> nz(P * N * d);  // N * Z_i per (path, particle)
  std::vector<double> sigma(d * n), hvec(n), zvec(d);
  std::vector<double> ehat(P), center(P), mart(P);

  for (std::size_t k = K; k-- > 0;) {
    const double t_k = batch.times[k];
    std::vector<EmpiricalMeasure> mus;
    mus.reserve(P);
    for (std::size_t p = 0; p < P; ++p) mus.emplace_back(batch.config(k, p), d);

    // features and the shared normal matrix of the symmetric basis
    gram_y.setZero();
    rhs_c.setZero();
    for (std::size_t p = 0; p < P; ++p) {
      const std::span<double> phi(phi_store.data() + p * by, by);
      eval_features(basis, mus[p], phi);
      Eigen::Map<const Eigen::VectorXd> phiv(phi.data(), static_cast<Eigen::Index>(by));
      gram_y.selfadjointView<Eigen::Lower>().rankUpdate(phiv);
      rhs_c.col(0) += phiv * out.y[(k + 1) * P + p];
    }
    gram_y = gram_y.selfadjointView<Eigen::Lower>();
    out.diag.condition_y[k] = condition_of(gram_y);
    if (out.diag.condition_y[k] > options.condition_limit) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "solve_lsmc: degenerate Y basis at time step %zu", k);
      throw BasisDegeneracyError(k, buf);
    }
    Eigen::MatrixXd reg = gram_y;
    reg.diagonal().array() += options.ridge_rel * gram_y.trace() / static_cast<double>(by);
    const auto ldlt = reg.ldlt();
    const Eigen::VectorXd coef_c = ldlt.solve(rhs_c).col(0);  // centre: fit of Y_{k+1}
    for (std::size_t p = 0; p < P; ++p) {
      Eigen::Map<const Eigen::VectorXd> phiv(phi_store.data() + p * by,
                                             static_cast<Eigen::Index>(by));
      center[p] = phiv.dot(coef_c);
    }

    // --- common-noise integrand first: regression of the centred target -----
    rhs_z0.setZero();
    for (std::size_t p = 0; p < P; ++p) {
      const double y_centred = out.y[(k + 1) * P + p] - center[p];
      Eigen::Map<const Eigen::VectorXd> phiv(phi_store.data() + p * by,
                                             static_cast<Eigen::Index>(by));
      const auto dw0 = batch.delta_w0(k, p);
      for (std::size_t j = 0; j < m; ++j)
        rhs_z0.col(static_cast<Eigen::Index>(j)) += phiv * (y_centred * dw0[j] / dt);
    }
    const Eigen::MatrixXd coef_z0 = ldlt.solve(rhs_z0);
    for (std::size_t b = 0; b < by; ++b)
      for (std::size_t j = 0; j < m; ++j)
        out.z0_coef[(k * by + b) * m + j] =
            coef_z0(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));

    // --- Z: pooled martingale-increment regression --------------------------
    // The target is centred by the fitted conditional mean and by the fitted
    // common-noise increment (dW_i is independent of dW_0, so both control
    // variates are conditionally uncorrelated with dW_i); this strips the
    // variance that does not shrink with N.
    gram_z.setZero();
    rhs_z.setZero();
    for (std::size_t p = 0; p < P; ++p) {
      Eigen::Map<const Eigen::VectorXd> phiv(phi_store.data() + p * by,
                                             static_cast<Eigen::Index>(by));
      const auto dw0 = batch.delta_w0(k, p);
      double common_inc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t b = 0; b < by; ++b)
          s += out.z0_coef[(k * by + b) * m + j] * phiv(static_cast<Eigen::Index>(b));
        common_inc += s * dw0[j];
      }
      const double y_centred = out.y[(k + 1) * P + p] - center[p] - common_inc;
      const auto mean = mus[p].mean();
      const auto stream_base = static_cast<std::uint32_t>(p * N);
      for (std::size_t i = 0; i < N; ++i) {
        const auto xi = batch.state(k, p, i);
        psi(0) = 1.0;
        for (std::size_t c = 0; c < d; ++c) psi(1 + static_cast<Eigen::Index>(c)) = xi[c];
        for (std::size_t c = 0; c < d; ++c)
          psi(1 + static_cast<Eigen::Index>(d + c)) = mean[c];
        gram_z.selfadjointView<Eigen::Lower>().rankUpdate(psi);
        for (std::size_t j = 0; j < n; ++j) {
          const double dw = sqrt_dt * rng.normal(NoiseField::kKindIdio,
                                                 stream_base + static_cast<std::uint32_t>(i),
                                                 static_cast<std::uint32_t>(k),
                                                 static_cast<std::uint32_t>(j));
          rhs_z.col(static_cast<Eigen::Index>(j)) += psi * (y_centred * dw / dt);
        }
      }
    }
    gram_z = gram_z.selfadjointView<Eigen::Lower>();
    out.diag.condition_z[k] = condition_of(gram_z);
    if (out.diag.condition_z[k] > options.condition_limit) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "solve_lsmc: degenerate Z basis at time step %zu", k);
      throw BasisDegeneracyError(k, buf);
    }
    {
      const double ridge = options.ridge_rel * gram_z.trace() / static_cast<double>(bz);
      Eigen::MatrixXd reg_z = gram_z;
      reg_z.diagonal().array() += ridge;
      const Eigen::MatrixXd coef = reg_z.ldlt().solve(rhs_z);
      for (std::size_t b = 0; b < bz; ++b)
        for (std::size_t j = 0; j < n; ++j)
          out.z_coef[(k * bz + b) * n + j] =
              coef(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
    }

    // materialize N*Z_i, flag instabilities, and rebuild the fitted martingale
    // increment M(p) = sum_i hhat_i.dW_i + hhat_0.dW_0 for the Y control variate
    for (std::size_t p = 0; p < P; ++p) {
      const auto mean = mus[p].mean();
      const auto stream_base = static_cast<std::uint32_t>(p * N);
      double m_inc = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        const auto xi = batch.state(k, p, i);
        psi(0) = 1.0;
        for (std::size_t c = 0; c < d; ++c) psi(1 + static_cast<Eigen::Index>(c)) = xi[c];
        for (std::size_t c = 0; c < d; ++c)
          psi(1 + static_cast<Eigen::Index>(d + c)) = mean[c];
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t b = 0; b < bz; ++b)
            s += out.z_coef[(k * bz + b) * n + j] * psi(static_cast<Eigen::Index>(b));
          hvec[j] = s;
          const double dw = sqrt_dt * rng.normal(NoiseField::kKindIdio,
                                                 stream_base + static_cast<std::uint32_t>(i),
                                                 static_cast<std::uint32_t>(k),
                                                 static_cast<std::uint32_t>(j));
          m_inc += s * dw;
        }
        spec.vol_sigma(t_k, xi, mus[p], sigma);
        apply_sigma_pinv(sigma, d, n, hvec, zvec);
        double norm_x = 0.0, norm_nz = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double scaled = static_cast<double>(N) * zvec[c];
          nz[(p * N + i) * d + c] = scaled;
          norm_x += xi[c] * xi[c];
          norm_nz += scaled * scaled;
        }
        if (std::sqrt(norm_nz) > 1e3 * (1.0 + std::sqrt(norm_x)))
          ++out.diag.z_instability_flags;
      }
      const auto dw0 = batch.delta_w0(k, p);
      Eigen::Map<const Eigen::VectorXd> phiv(phi_store.data() + p * by,
                                             static_cast<Eigen::Index>(by));
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t b = 0; b < by; ++b)
          s += out.z0_coef[(k * by + b) * m + j] * phiv(static_cast<Eigen::Index>(b));
        m_inc += s * dw0[j];
      }
      mart[p] = m_inc;
    }

    // --- conditional expectation of the centred Y target --------------------
    rhs_e.setZero();
    for (std::size_t p = 0; p < P; ++p) {
      Eigen::Map<const Eigen::VectorXd> phiv(phi_store.data() + p * by,
                                             static_cast<Eigen::Index>(by));
      rhs_e.col(0) += phiv * (out.y[(k + 1) * P + p] - mart[p]);
    }
    const Eigen::VectorXd coef_e = ldlt.solve(rhs_e).col(0);
    double resid = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      Eigen::Map<const Eigen::VectorXd> phiv(phi_store.data() + p * by,
                                             static_cast<Eigen::Index>(by));
      ehat[p] = phiv.dot(coef_e);
      const double r = out.y[(k + 1) * P + p] - mart[p] - ehat[p];
      resid += r * r;
    }
    out.diag.residual_var[k] = resid / static_cast<double>(P);

    // --- driver step with one (or two) Picard passes -------------------------
    auto driver_sum = [&](std::size_t p, double y_val) {
      double acc = 0.0;
      for (std::size_t i = 0; i < N; ++i)
        acc += spec.driver_Hb(t_k, batch.state(k, p, i), mus[p], y_val,
                              std::span<const double>(nz.data() + (p * N + i) * d, d));
      return acc / static_cast<double>(N);
    };
    double max_change = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double y0 = ehat[p];
      const double y1 = ehat[p] + dt * driver_sum(p, y0);
      out.y[k * P + p] = y1;
      max_change = std::max(max_change, std::abs(y1 - y0) / (1.0 + std::abs(y0)));
    }
    if (max_change > options.picard_tol) {
      ++out.diag.picard_second_passes;
      for (std::size_t p = 0; p < P; ++p)
        out.y[k * P + p] = ehat[p] + dt * driver_sum(p, out.y[k * P + p]);
    }
  }
  return out;
}

CorrectionSeries correction_term(const AnalyticSolution& sol, const ModelSpec& spec,
                                 const ParticlePaths& paths) {
  if (!sol.d2mu_v) throw UsageError("correction_term: d2mu_v missing");
  const std::size_t N = paths.particles, d = paths.dim, n = paths.noise_dim, m = paths.common_dim;
  CorrectionSeries out;
  out.times = paths.times;
  out.full.assign(paths.times.size(), 0.0);
  out.idio.assign(paths.times.size(), 0.0);
  std::vector<double> sig(d * n), sig0(d * m), hess(d * d);
  const double scale = 1.0 / (2.0 * static_cast<double>(N) * static_cast<double>(N));
  for (std::size_t k = 0; k < paths.times.size(); ++k) {
    const double t = paths.times[k];
    const EmpiricalMeasure mu(paths.step_states(k), d);
    double acc_full = 0.0, acc_idio = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const auto xi = paths.state(k, i);
      spec.vol_sigma(t, xi, mu, sig);
      spec.vol_sigma0(t, xi, mu, sig0);
      sol.d2mu_v(t, mu, xi, xi, hess);
      // tr(S * hess) with S = sigma sigma^T (+ sigma0 sigma0^T for the full variant)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          double s_idio = 0.0, s_comm = 0.0;
          for (std::size_t j = 0; j < n; ++j) s_idio += sig[a * n + j] * sig[b * n + j];
          for (std::size_t j = 0; j < m; ++j) s_comm += sig0[a * m + j] * sig0[b * m + j];
          const double h_ba = hess[b * d + a];
          acc_idio += s_idio * h_ba;
          acc_full += (s_idio + s_comm) * h_ba;
        }
    }
    out.full[k] = scale * acc_full;
    out.idio[k] = scale * acc_idio;
  }
  for (std::size_t k = 0; k + 1 < paths.times.size(); ++k) {
    const double h = paths.times[k + 1] - paths.times[k];
    out.integral_full += 0.5 * h * (out.full[k] + out.full[k + 1]);
    out.integral_idio += 0.5 * h * (out.idio[k] + out.idio[k + 1]);
  }
  return out;
}

void dump_bsde_csv(const BackwardSolution& back, std::ostream& os) {
  os << "k,t,path,Y,mean_abs_z,max_abs_z\n";
  char buf[160];
  for (std::size_t k = 0; k < back.times.size(); ++k) {
    double mean_abs = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < back.particles; ++i) {
      const auto zi = back.z_at(k, i);
      double norm = 0.0;
      for (const double zc : zi) norm += zc * zc;
      norm = std::sqrt(norm);
      mean_abs += norm;
      max_abs = std::max(max_abs, norm);
    }
    mean_abs /= static_cast<double>(back.particles);
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,0,%.17g,%.17g,%.17g\n", k, back.times[k],
                  back.y_at(k), mean_abs, max_abs);
    os << buf;
  }
}

void dump_bsde_csv(const BackwardSolution& back, const PathBatch& batch, std::ostream& os) {
  os << "k,t,path,Y,mean_abs_z,max_abs_z\n";
  char buf[160];
  std::vector<double> zrow(back.particles * back.dim);
  for (std::size_t k = 0; k < back.times.size(); ++k) {
    for (std::size_t p = 0; p < back.path_count; ++p) {
      double mean_abs = std::numeric_limits<double>::quiet_NaN();
      double max_abs = std::numeric_limits<double>::quiet_NaN();
      if (k < back.steps()) {
        back.z_block(batch, k, p, zrow);
        mean_abs = 0.0;
        max_abs = 0.0;
        for (std::size_t i = 0; i < back.particles; ++i) {
          double norm = 0.0;
          for (std::size_t c = 0; c < back.dim; ++c) {
            const double zc = zrow[i * back.dim + c];
            norm += zc * zc;
          }
          norm = std::sqrt(norm);
          mean_abs += norm;
          max_abs = std::max(max_abs, norm);
        }
        mean_abs /= static_cast<double>(back.particles);
      }
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%zu,%.17g,%.17g,%.17g\n", k, back.times[k], p,
                    back.y_at(k, p), mean_abs, max_abs);
      os << buf;
    }
  }
}

}  // namespace mfp
