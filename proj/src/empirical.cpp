#include "mfp/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfp/errors.hpp"

namespace mfp {

EmpiricalMeasure::EmpiricalMeasure(std::span<const double> flat, std::size_t dim) : dim_(dim) {
  if (dim == 0) throw UsageError("EmpiricalMeasure: dim must be positive");
  if (flat.empty() || flat.size() % dim != 0)
    throw UsageError("EmpiricalMeasure: flat size must be a positive multiple of dim");
  n_ = flat.size() / dim;
  data_.assign(flat.begin(), flat.end());
  for (const double xc : data_)
    if (!std::isfinite(xc)) throw UsageError("EmpiricalMeasure: non-finite coordinate");

  // Moments accumulate in sorted order so that they are bitwise invariant
  // under atom permutations (the exchangeability contract of the simulator).
  mean_.assign(dim_, 0.0);
  thread_local std::vector<double> scratch;
  scratch.resize(n_);
  for (std::size_t c = 0; c < dim_; ++c) {
    for (std::size_t i = 0; i < n_; ++i) scratch[i] = data_[i * dim_ + c];
    std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n_));
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += scratch[i];
    mean_[c] = s / static_cast<double>(n_);
  }
  for (std::size_t i = 0; i < n_; ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double xc = data_[i * dim_ + c];
      sq += xc * xc;
    }
    scratch[i] = sq;
  }
  std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n_));
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += scratch[i];
  second_moment_ = s / static_cast<double>(n_);
  norm2_ = std::sqrt(second_moment_);
}

EmpiricalMeasure::EmpiricalMeasure(const std::vector<std::vector<double>>& atoms, std::size_t dim)
    : EmpiricalMeasure(
          [&atoms, dim] {
            std::vector<double> flat;
            flat.reserve(atoms.size() * dim);
            for (const auto& a : atoms) {
              if (a.size() != dim) throw UsageError("EmpiricalMeasure: atom dim mismatch");
              flat.insert(flat.end(), a.begin(), a.end());
            }
            return flat;
          }(),
          dim) {}

EmpiricalMeasure lift(std::span<const double> flat, std::size_t dim) {
  return EmpiricalMeasure(flat, dim);
}

EmpiricalMeasure lift(const std::vector<std::vector<double>>& atoms) {
  if (atoms.empty()) throw UsageError("lift: empty configuration");
  return EmpiricalMeasure(atoms, atoms.front().size());
}

std::vector<double> mean(const EmpiricalMeasure& mu) {
  return {mu.mean().begin(), mu.mean().end()};
}

double second_moment_norm(const EmpiricalMeasure& mu) { return mu.second_moment_norm(); }

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double d = a[c] - b[c];
    s += d * d;
  }
  return s;
}

double w2_sorted_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const std::size_t n = mu.size();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = mu.atom(i)[0];
    b[i] = nu.atom(i)[0];
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(n));
}

// Entropic regularization fallback for large clouds. Log-domain Sinkhorn on
// uniform marginals; the returned transport cost excludes the entropy term.
double w2_sinkhorn(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const std::size_t n = mu.size();
  std::vector<double> cost(n * n);
  double mean_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cost[i * n + j] = sq_dist(mu.atom(i), nu.atom(j));
      mean_cost += cost[i * n + j];
    }
  mean_cost /= static_cast<double>(n * n);
  const double eps = std::max(0.01 * mean_cost, 1e-300);

  const double log_a = -std::log(static_cast<double>(n));
  std::vector<double> f(n, 0.0), g(n, 0.0);
  auto lse_row = [&](std::size_t i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) m = std::max(m, (g[j] - cost[i * n + j]) / eps);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp((g[j] - cost[i * n + j]) / eps - m);
    return m + std::log(s);
  };
  auto lse_col = [&](std::size_t j) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, (f[i] - cost[i * n + j]) / eps);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp((f[i] - cost[i * n + j]) / eps - m);
    return m + std::log(s);
  };

  for (int it = 0; it < 2000; ++it) {
    for (std::size_t i = 0; i < n; ++i) f[i] = eps * (log_a - lse_row(i));
    for (std::size_t j = 0; j < n; ++j) g[j] = eps * (log_a - lse_col(j));
    // row-marginal violation after the column update
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        row += std::exp((f[i] + g[j] - cost[i * n + j]) / eps);
      err = std::max(err, std::abs(row - 1.0 / static_cast<double>(n)));
    }
    if (err < 1e-12) break;
  }

  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      value += std::exp((f[i] + g[j] - cost[i * n + j]) / eps) * cost[i * n + j];
  return std::sqrt(std::max(value, 0.0));
}

}  // namespace

double assignment_cost(const std::vector<double>& cost, std::size_t n) {
  // Jonker-Volgenant: shortest augmenting paths with dual potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, n), way(n + 1, n);
  for (std::size_t i = 0; i < n; ++i) {
    match[n] = i;
    std::size_t j0 = n;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      std::size_t j1 = n;
      double delta = inf;
      for (std::size_t j = 0; j < n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 * n + j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != n);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != n);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += cost[match[j] * n + j];
  return total;
}

W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.size() != nu.size())
    throw UsageError("wasserstein2: clouds must have equal atom counts");
  if (mu.dim() != nu.dim()) throw UsageError("wasserstein2: dimension mismatch");
  const std::size_t n = mu.size();

  if (mu.dim() == 1) return {w2_sorted_1d(mu, nu), false};

  if (n <= kExactAssignmentLimit) {
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = sq_dist(mu.atom(i), nu.atom(j));
    const double total = assignment_cost(cost, n);
    return {std::sqrt(std::max(total, 0.0) / static_cast<double>(n)), false};
  }
  return {w2_sinkhorn(mu, nu), true};
}

}  // namespace mfp
