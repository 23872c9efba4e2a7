#ifndef MFP_LQ_TYPES_HPP
#define MFP_LQ_TYPES_HPP

namespace mfp {

// Data of the scalar linear-quadratic instance (d = n = m = 1, r = 0).
// Controlled drift beta(t,x,mu,alpha) = a*x + alpha, running cost
// q*x^2 + qbar*mean(mu)^2 + control_weight*alpha^2, terminal cost
// g*m2(mu) + gbar*mean(mu)^2, constant volatilities.
struct LqParams {
  double a = 0.0;
  double q = 0.0;
  double qbar = 0.0;
  double g = 0.0;
  double gbar = 0.0;
  double sigma = 0.0;
  double sigma0 = 0.0;
  double horizon = 1.0;
  double control_weight = 1.0;
};

// Exploration drift b(t,x,mu) = b0 + b1*x + b2*mean(mu).
struct AffineDrift {
  double b0 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
};

// Scalar Gaussian initial law.
struct GaussianLaw {
  double mean = 0.0;
  double var = 1.0;
};

}  // namespace mfp

#endif  // MFP_LQ_TYPES_HPP
