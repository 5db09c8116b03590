#pragma once

#include <vector>

#include "mmblow/profile.hpp"

namespace mmblow {

struct LawConstants {
  int dim = 1;
  double p = 2;
  double alpha = 0, beta = 0;
  double yQ = 0;       // || |y| Q ||_2^2
  double E0 = 0, C0 = 0;
  double B = 0;        // 2β/(2-α)
  double lambda0 = 0;
  double C = 0;        // rescaled-time constant
  double C_lambda = 0, C_b = 0;
};

LawConstants make_law_constants(const ProfileExpansion &e, double E0);

// Exponents of |t| in λ and b: 2/(4-α) and α/(4-α).
double lambda_exponent(int dim, double p);
double b_exponent(int dim, double p);

struct AppLaw {
  double lambda = 0, b = 0;
};
AppLaw lambda_b_app(double s, const LawConstants &c);

double F_of_lambda(double lambda, const LawConstants &c);

struct InitialParams {
  double s1 = 0, lambda1 = 0, b1 = 0;
  double closeness = 0;
};

// |λ^{α/2}/λ_app(s)^{α/2} - 1| + |b/b_app(s) - 1|
double closeness(double lambda, double b, double s, const LawConstants &c);

InitialParams initial_params(double s1, const LawConstants &c, const ProfileExpansion &e);

double s1_of_t1(double t1, const LawConstants &c);
double t1_of_s1(double s1, const LawConstants &c);

// s(t) = s1 + ∫_{t1}^t λ(τ)^{-2} dτ along a sampled trajectory with t1 the first
// sample, integrated with local cubic interpolation of λ^{-2}; t_of_s inverts it
// by bracketed search. Samples may run forward or backward in t; the accessors
// return them sorted by increasing t.
class TimeMap {
public:
  TimeMap(std::vector<double> t, const std::vector<double> &lambda, double s1);
  double s_of_t(double t) const;
  double t_of_s(double s) const;
  const std::vector<double> &nodes_t() const { return t_; }
  const std::vector<double> &nodes_s() const { return s_; }

private:
  double integral(size_t i, double t) const; // ∫_{t_i}^{t} of the local cubic
  std::vector<double> t_, f_, s_;
};

} // namespace mmblow
