#ifndef MFP_EMPIRICAL_HPP
#define MFP_EMPIRICAL_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace mfp {

// Uniform-weight point cloud: the lift mu_bar(x) = (1/N) sum_i delta_{x_i}.
// Atom order is preserved (reproducibility); first and second moments are
// computed once at construction so that measure-functional evaluations inside
// hot loops stay O(1).
class EmpiricalMeasure {
 public:
  // `flat` holds N atoms of dimension d, atom-major.
  EmpiricalMeasure(std::span<const double> flat, std::size_t dim);
  EmpiricalMeasure(const std::vector<std::vector<double>>& atoms, std::size_t dim);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> atom(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<const double> flat() const { return data_; }

  // Arithmetic mean of the atoms.
  std::span<const double> mean() const { return mean_; }
  // (1/N) sum |x_i|^2.
  double second_moment() const { return second_moment_; }
  // ||mu||_2 = sqrt((1/N) sum |x_i|^2) = |x|/sqrt(N).
  double second_moment_norm() const { return norm2_; }

 private:
  std::size_t n_ = 0, dim_ = 0;
  std::vector<double> data_;
  std::vector<double> mean_;
  double second_moment_ = 0.0;
  double norm2_ = 0.0;
};

// Packages a configuration in (R^d)^N as an empirical measure.
EmpiricalMeasure lift(std::span<const double> flat, std::size_t dim);
EmpiricalMeasure lift(const std::vector<std::vector<double>>& atoms);

std::vector<double> mean(const EmpiricalMeasure& mu);
double second_moment_norm(const EmpiricalMeasure& mu);

struct W2Result {
  double value = 0.0;
  // True when the entropic fallback was used (d >= 2 and N > kExactAssignmentLimit).
  bool approximate = false;
};

// Above this atom count the d >= 2 branch switches from exact optimal
// assignment to a Sinkhorn approximation.
inline constexpr std::size_t kExactAssignmentLimit = 64;

// Wasserstein-2 distance between equal-size uniform clouds.
//  d = 1             exact, by sorted matching
//  d >= 2, N <= 64   exact, optimal assignment on squared-distance costs
//  d >= 2, N >  64   entropic approximation, eps = 0.01 * mean pairwise squared distance
W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Exact min-cost perfect matching value for a dense n x n cost matrix
// (Jonker-Volgenant shortest augmenting paths). Exposed for tests.
double assignment_cost(const std::vector<double>& cost, std::size_t n);

}  // namespace mfp

#endif  // MFP_EMPIRICAL_HPP
