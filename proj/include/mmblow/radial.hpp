#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "mmblow/common.hpp"

namespace mmblow {

// Uniform cell-centred radial grid r_i = (i + 1/2) h. No node sits on the
// origin; the even reflection f(-r) = f(r) supplies ghost values there and
// the field is taken to vanish beyond rmax.
struct RadialGrid {
  int dim = 1;
  double rmax = 0;
  int n = 0;
  double h = 0;
  double omega = 0; // surface measure of the unit sphere, 2 for dim 1
  RVec r;           // nodes
  RVec w;           // quadrature weights for the integral over R^dim
  SpMat lap;        // radial Laplacian f'' + (dim-1)/r f'
  SpMat d1;         // first derivative

  static constexpr int half_width = 5; // stencil half width (order 10)
};

using Grid = std::shared_ptr<const RadialGrid>;

Grid make_grid(int dim, double rmax, int n);
double sphere_area(int dim);

enum class Decay { exponential, polynomial };

struct RadialFunction {
  Grid grid;
  CVec values;
  Decay decay = Decay::exponential;

  RadialFunction() = default;
  RadialFunction(Grid g, CVec v, Decay d = Decay::exponential)
      : grid(std::move(g)), values(std::move(v)), decay(d) {}
  RadialFunction(Grid g, const RVec &v, Decay d = Decay::exponential)
      : grid(std::move(g)), values(v.cast<cplx>()), decay(d) {}

  RVec real() const { return values.real(); }
  RVec imag() const { return values.imag(); }
  bool finite() const;
  // |f(rmax)| <= 1e-12 * peak for exponentially decaying functions.
  bool decay_ok(double rel = 1e-12) const;
};

// Vector-level kernels; complex inputs are handled componentwise.
RVec apply(const SpMat &m, const RVec &f);
CVec apply(const SpMat &m, const CVec &f);

double inner(const RadialGrid &g, const RVec &f, const RVec &h);
double inner(const RadialGrid &g, const CVec &f, const CVec &h);
double norm2sq(const RadialGrid &g, const CVec &f);
double grad2sq(const RadialGrid &g, const CVec &f); // ||f'||^2
double h1sq(const RadialGrid &g, const CVec &f);    // ||f||^2 + ||f'||^2
CVec lambda_apply(const RadialGrid &g, const CVec &f);
RVec lambda_apply(const RadialGrid &g, const RVec &f);

// RadialFunction-level operations.
RadialFunction laplacian(const RadialFunction &f);
RadialFunction lambda_op(const RadialFunction &f);
double inner(const RadialFunction &f, const RadialFunction &g);

struct PairingResiduals {
  double weight = 0;    // (|x|^{2p} w, Λw) + p || |x|^p w ||^2
  double kinetic = 0;   // (-Δw, Λw) - ||∇w||^2
  double potential = 0; // (|w|^q w, Λw) - Nq/(2(q+2)) ||w||_{q+2}^{q+2}
};
PairingResiduals check_pairing_identities(const RadialFunction &w, double q,
                                          double p = 1.0);

// Tenth-order Lagrange interpolation at arbitrary radii, honouring the even
// reflection at the origin and the zero extension past rmax.
CVec interpolate(const RadialGrid &g, const CVec &f, const RVec &x);
RVec interpolate(const RadialGrid &g, const RVec &f, const RVec &x);

// Fitted exponential decay rate of |f| on [r0, r1], with the r^{-(dim-1)/2}
// prefactor removed.
double fitted_decay_rate(const RadialGrid &g, const RVec &f, double r0,
                         double r1);

void write_csv(std::ostream &os, const RadialFunction &f);
std::string grid_json(const RadialGrid &g);

} // namespace mmblow
