#pragma once

#include <map>
#include <memory>
#include <utility>

#include "mmblow/groundstate.hpp"

namespace mmblow {

// Pointwise nonlinearity calculus for F(z) = |z|^{e+2}/(e+2), f(z) = |z|^e z.
namespace nl {
double F(cplx z, double e);
cplx f(cplx z, double e);
double dF(cplx z, cplx w, double e);          // d/dt F(z + t w) at t = 0
cplx df(cplx z, cplx w, double e);            // d/dt f(z + t w) at t = 0
double d2F(cplx z, cplx w, double e);         // second derivative along w
double remainder(cplx z, cplx w, double e);   // F(z+w) - F(z) - dF(z)(w)
} // namespace nl

struct ProfileTerm {
  RVec plus;  // P+_{j,k}: coefficient of b^{2j} λ^{(k+1)α}
  RVec minus; // P-_{j,k}: coefficient of i b^{2j+1} λ^{(k+1)α}
  double beta = 0;
};

struct ProfileExpansion {
  std::shared_ptr<const GroundStateData> gs;
  int dim = 1;
  double p = 2;
  double alpha = 1;
  int K = 2;
  std::map<std::pair<int, int>, ProfileTerm> terms;
  double beta = 0;               // β_{0,0}
  double max_defect = 0;         // largest relative L- solvability defect
  double max_cancellation = 0;   // largest residual coefficient after solving

  const RadialGrid &grid() const { return *gs->grid; }
  double q() const { return 4.0 / dim; }
  double beta_formula() const;   // 2N(p-1)/(p+1) ||Q||_{p+1}^{p+1} / |||y|Q||^2
  double B() const { return 2 * beta / (2 - alpha); }

  CVec eval_P(double b, double lambda) const;
  CVec dP_db(double b, double lambda) const;
  CVec dP_dlambda(double b, double lambda) const;
  double theta(double b, double lambda) const;
};

ProfileExpansion build_expansion(std::shared_ptr<const GroundStateData> gs, double p,
                                 int K = 2);

struct ProfileEval {
  RadialFunction P;
  double theta = 0;
  double psi_norm = 0;
  double eps_prime = 0;
};

// Half the fitted exponential decay rate of Q.
double default_eps_prime(const GroundStateData &gs);

RadialFunction eval_P(const ProfileExpansion &e, double b, double lambda);
CVec residual_Psi_field(const ProfileExpansion &e, double b, double lambda);
double residual_Psi(const ProfileExpansion &e, double b, double lambda,
                    double eps_prime);
ProfileEval evaluate(const ProfileExpansion &e, double b, double lambda,
                     double eps_prime);

// λ^{-N/2} P(x/λ) e^{-i b |x|^2/(4λ^2) + iγ} sampled on a physical grid.
CVec rescale_profile(const ProfileExpansion &e, double lambda, double b, double gamma,
                     const RadialGrid &target);

// Energy of the rescaled profile for the focusing double-power equation.
double profile_energy(const ProfileExpansion &e, double lambda, double b);
double profile_mass(const ProfileExpansion &e, double lambda, double b);

// Energy functional ½||∇u||^2 - ∫F_crit(u) - sign ∫|u|^{p+1}/(p+1).
struct EnergyParts {
  double kinetic = 0, critical = 0, lower = 0, total = 0;
};
EnergyParts energy_parts(const RadialGrid &g, const CVec &u, double p, int sign = +1);
double energy(const RadialGrid &g, const CVec &u, double p, int sign = +1);

} // namespace mmblow
