#pragma once

#include <map>
#include <memory>
#include <vector>

#include <Eigen/SparseLU>

#include "mmblow/radial.hpp"

namespace mmblow {

struct GroundStateNorms {
  double mass = 0;  // ||Q||_2^2
  double grad = 0;  // ||∇Q||_2^2
  double crit = 0;  // ||Q||_{2+4/N}^{2+4/N}
  double yQ = 0;    // || |y| Q ||_2^2
  double y2Q = 0;   // || |y|^2 Q ||_2^2
  std::map<double, double> lp1; // p -> ||Q||_{p+1}^{p+1}
};

struct GroundStateData {
  int dim = 1;
  Grid grid;
  RadialFunction Q;
  RadialFunction rho;
  GroundStateNorms norms;
  double mu = 0; // 0 when not computed

  double q() const { return 4.0 / dim; }
  double lp1(double p) const; // ||Q||_{p+1}^{p+1}, computed on demand
};

// Grid with enough room for the exponential tail of Q in dimension dim.
Grid default_grid(int dim, int nodes_per_unit = 50, double rmax = 30.0);

// Q(0) from shooting alone, bisected to 1e-14 relative.
double shoot_Q0(int dim, double *divergence_radius = nullptr);

RadialFunction solve_Q(int dim, const Grid &grid);
RadialFunction solve_Q(int dim);

RVec apply_Lplus(const RadialGrid &g, const RVec &Q, const RVec &f);
RVec apply_Lminus(const RadialGrid &g, const RVec &Q, const RVec &f);
RadialFunction apply_Lplus(const RadialFunction &f, const RadialFunction &Q);
RadialFunction apply_Lminus(const RadialFunction &f, const RadialFunction &Q);

RadialFunction solve_rho(const RadialFunction &Q);

// Smallest generalized Rayleigh quotient of L+ (real part, orthogonal to Q
// and |y|^2 Q) and L- (imaginary part, orthogonal to ρ) against the H^1
// Gram matrix. Dense; intended for grids of at most a few thousand nodes.
struct CoercivityResult {
  double mu = 0, mu_plus = 0, mu_minus = 0;
};
CoercivityResult coercivity_spectrum(const RadialFunction &Q,
                                     const RadialFunction &rho);
double coercivity_mu(const RadialFunction &Q, const RadialFunction &rho);

GroundStateData build_ground_state(const Grid &grid,
                                   const std::vector<double> &ps = {},
                                   bool with_mu = false);

// Identity residuals used by the statics checks.
struct GroundStateResiduals {
  double ode = 0;        // max |ΔQ - Q + Q^{1+4/N}| / max Q
  double lminus_q = 0;   // ||L- Q|| / ||Q||
  double lplus_lq = 0;   // ||L+ ΛQ + 2Q|| / ||2Q||
  double lminus_y2q = 0; // ||L- |y|^2 Q + 4ΛQ|| / ||4ΛQ||
  double lplus_rho = 0;  // ||L+ ρ - |y|^2 Q|| / |||y|^2 Q||
  double pohozaev = 0;   // |½||∇Q||^2 - N/(2N+4)||Q||_{2+4/N}^{2+4/N}| / ||∇Q||^2
  double pohozaev_mass = 0; // |||∇Q||^2 + ||Q||^2 - ||Q||_{2+4/N}^{2+4/N}| / crit
  double q_rho_literal = 0;   // (Q,ρ) / (½|||y|^2 Q||^2) - 1
  double q_rho_corrected = 0; // (Q,ρ) / (½|||y| Q||^2) - 1
  bool positive = false, decreasing = false;
};
GroundStateResiduals ground_state_residuals(const GroundStateData &gs);

// Sparse factorizations of L+ and of L- bordered by Q.
class LinearizedSolver {
public:
  explicit LinearizedSolver(const GroundStateData &gs);
  RVec solve_plus(const RVec &rhs) const;
  // Solves L- x + c Q = rhs with (x, Q) = 0; c is the solvability defect.
  RVec solve_minus(const RVec &rhs, double *defect = nullptr) const;

private:
  const GroundStateData *gs_;
  int n_;
  Eigen::SparseLU<SpMat> plus_, minus_;
};

} // namespace mmblow
