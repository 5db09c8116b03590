#include "mmblow/groundstate.hpp"

#include <array>
#include <cmath>
#include <limits>

#include <boost/numeric/odeint.hpp>

namespace mmblow {

namespace {

using State = std::array<double, 2>;

struct GroundOde {
  int dim;
  double q;
  void operator()(const State &y, State &dy, double r) const {
    dy[0] = y[1];
    dy[1] = -(dim - 1) / r * y[1] + y[0] - std::pow(std::abs(y[0]), q) * y[0];
  }
};

constexpr double kR0 = 1e-6;

State series_start(int dim, double a) {
  const double q = 4.0 / dim;
  const double c = (a - std::pow(a, 1 + q)) / dim; // Q''(0)
  return {a + 0.5 * c * kR0 * kR0, c * kR0};
}

// +1: Q crossed zero (a too large); -1: Q turned upward (a too small).
int classify(int dim, double a, double rmax, double *event_r) {
  namespace ode = boost::numeric::odeint;
  GroundOde sys{dim, 4.0 / dim};
  auto stepper = ode::make_controlled(1e-13, 1e-13, ode::runge_kutta_dopri5<State>());
  State y = series_start(dim, a);
  double r = kR0, dr = 1e-4;
  while (r < rmax) {
    if (stepper.try_step(sys, y, r, dr) != ode::success)
      continue;
    if (y[0] < 0) {
      *event_r = r;
      return +1;
    }
    if (y[1] > 0) {
      *event_r = r;
      return -1;
    }
  }
  *event_r = rmax;
  return 0;
}

} // namespace

Grid default_grid(int dim, int nodes_per_unit, double rmax) {
  return make_grid(dim, rmax, static_cast<int>(std::lround(rmax * nodes_per_unit)));
}

double shoot_Q0(int dim, double *divergence_radius) {
  require(dim >= 1, "solve_Q: dim must be >= 1");
  const double rmax = 200.0;
  double ev = 0;
  double lo = 0.5, hi = 2.0;
  while (classify(dim, lo, rmax, &ev) != -1) {
    lo *= 0.5;
    if (lo < 1e-6)
      throw NumericalError("solve_Q: shooting bracket search failed (low side)");
  }
  while (classify(dim, hi, rmax, &ev) != +1) {
    hi *= 2.0;
    if (hi > 1e6)
      throw NumericalError("solve_Q: shooting bracket search failed (high side)");
  }
  double ev_lo = 0, ev_hi = 0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    double e = 0;
    const int c = classify(dim, mid, rmax, &e);
    if (c == 0) {
      lo = hi = mid;
      ev_lo = ev_hi = e;
      break;
    }
    if (c > 0) {
      hi = mid;
      ev_hi = e;
    } else {
      lo = mid;
      ev_lo = e;
    }
  }
  if (divergence_radius)
    *divergence_radius = std::min(ev_lo > 0 ? ev_lo : rmax, ev_hi > 0 ? ev_hi : rmax);
  return 0.5 * (lo + hi);
}

RadialFunction solve_Q(int dim, const Grid &grid) {
  namespace ode = boost::numeric::odeint;
  require(grid && grid->dim == dim, "solve_Q: grid dimension mismatch");
  const auto &g = *grid;
  double rdiv = 0;
  const double a = shoot_Q0(dim, &rdiv);
  const double rstop = 0.8 * rdiv;

  RVec Q = RVec::Zero(g.n);
  std::vector<double> times{kR0};
  for (int i = 0; i < g.n && g.r(i) <= rstop; ++i)
    times.push_back(g.r(i));
  if (times.size() < 8)
    throw NumericalError("solve_Q: shooting solution diverges too early");
  std::vector<double> vals;
  GroundOde sys{dim, 4.0 / dim};
  State y = series_start(dim, a);
  ode::integrate_times(
      ode::make_dense_output(1e-13, 1e-13, ode::runge_kutta_dopri5<State>()), sys, y,
      times.begin(), times.end(), 1e-4,
      [&](const State &s, double) { vals.push_back(s[0]); });
  const int filled = static_cast<int>(vals.size()) - 1;
  for (int i = 0; i < filled; ++i)
    Q(i) = vals[i + 1];
  const int i0 = filled - 1;
  for (int i = filled; i < g.n; ++i)
    Q(i) = Q(i0) * std::exp(-(g.r(i) - g.r(i0))) *
           std::pow(g.r(i0) / g.r(i), 0.5 * (dim - 1));

  // Newton polish of the discrete boundary-value problem.
  const double q = 4.0 / dim;
  SpMat eye(g.n, g.n);
  eye.setIdentity();
  const double scale = Q.cwiseAbs().maxCoeff();
  for (int it = 0; it < 40; ++it) {
    RVec F = g.lap * Q - Q + (Q.array().abs().pow(q) * Q.array()).matrix();
    SpMat J = g.lap - eye;
    RVec diag = (1 + q) * Q.array().abs().pow(q);
    for (int i = 0; i < g.n; ++i)
      J.coeffRef(i, i) += diag(i);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success)
      throw NumericalError("solve_Q: Newton Jacobian factorization failed");
    RVec dq = lu.solve(F);
    Q -= dq;
    if (dq.cwiseAbs().maxCoeff() <= 1e-15 * scale)
      break;
  }
  RVec F = g.lap * Q - Q + (Q.array().abs().pow(q) * Q.array()).matrix();
  if (!(F.cwiseAbs().maxCoeff() <= 1e-10 * Q.maxCoeff()))
    throw NumericalError("solve_Q: Newton polish did not converge "
                         "(grid too coarse or rmax too small)");
  return {grid, Q, Decay::exponential};
}

RadialFunction solve_Q(int dim) { return solve_Q(dim, default_grid(dim)); }

RVec apply_Lplus(const RadialGrid &g, const RVec &Q, const RVec &f) {
  const double q = 4.0 / g.dim;
  return -(g.lap * f) + f - ((1 + q) * Q.array().abs().pow(q) * f.array()).matrix();
}

RVec apply_Lminus(const RadialGrid &g, const RVec &Q, const RVec &f) {
  const double q = 4.0 / g.dim;
  return -(g.lap * f) + f - (Q.array().abs().pow(q) * f.array()).matrix();
}

RadialFunction apply_Lplus(const RadialFunction &f, const RadialFunction &Q) {
  if (f.grid != Q.grid)
    throw ConfigError("apply_Lplus: grid mismatch");
  return {f.grid, apply_Lplus(*Q.grid, Q.real(), f.real()), f.decay};
}

RadialFunction apply_Lminus(const RadialFunction &f, const RadialFunction &Q) {
  if (f.grid != Q.grid)
    throw ConfigError("apply_Lminus: grid mismatch");
  return {f.grid, apply_Lminus(*Q.grid, Q.real(), f.real()), f.decay};
}

namespace {

SpMat lplus_matrix(const RadialGrid &g, const RVec &Q, double coef) {
  const double q = 4.0 / g.dim;
  SpMat m = -g.lap;
  for (int i = 0; i < g.n; ++i)
    m.coeffRef(i, i) += 1.0 - coef * std::pow(std::abs(Q(i)), q);
  m.makeCompressed();
  return m;
}

} // namespace

RadialFunction solve_rho(const RadialFunction &Q) {
  const auto &g = *Q.grid;
  const RVec q = Q.real();
  Eigen::SparseLU<SpMat> lu;
  lu.compute(lplus_matrix(g, q, 1 + 4.0 / g.dim));
  if (lu.info() != Eigen::Success)
    throw NumericalError("solve_rho: L+ is singular on this grid; refine");
  RVec rhs = (g.r.array().square() * q.array()).matrix();
  RVec rho = lu.solve(rhs);
  return {Q.grid, rho, Decay::exponential};
}

CoercivityResult coercivity_spectrum(const RadialFunction &Qf,
                                     const RadialFunction &rhof) {
  const auto &g = *Qf.grid;
  if (g.n > 4000)
    throw ConfigError("coercivity_mu: grid too large for the dense eigensolver");
  const RVec Q = Qf.real(), rho = rhof.real();
  const int n = g.n;
  const RMat W = g.w.asDiagonal();
  const RMat D = RMat(g.d1);
  const RMat gram = W + D.transpose() * W * D;

  auto smallest = [&](const SpMat &L, const std::vector<RVec> &cons) {
    const RMat Ld = RMat(L);
    const RMat A = 0.5 * (W * Ld + Ld.transpose() * W);
    RMat C(n, cons.size());
    for (size_t k = 0; k < cons.size(); ++k)
      C.col(k) = g.w.asDiagonal() * cons[k];
    Eigen::HouseholderQR<RMat> qr(C);
    const RMat Qfull = qr.householderQ();
    const int k = static_cast<int>(cons.size());
    const RMat Z = Qfull.rightCols(n - k);
    const RMat Ar = Z.transpose() * A * Z;
    const RMat Br = Z.transpose() * gram * Z;
    Eigen::GeneralizedSelfAdjointEigenSolver<RMat> es(Ar, Br, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw NumericalError("coercivity_mu: eigensolver failed");
    return es.eigenvalues().minCoeff();
  };

  const double q = 4.0 / g.dim;
  const RVec y2Q = (g.r.array().square() * Q.array()).matrix();
  CoercivityResult res;
  res.mu_plus = smallest(lplus_matrix(g, Q, 1 + q), {Q, y2Q});
  res.mu_minus = smallest(lplus_matrix(g, Q, 1.0), {rho});
  res.mu = std::min(res.mu_plus, res.mu_minus);
  if (!(res.mu > 0))
    throw NumericalError("coercivity_mu: nonpositive value " + std::to_string(res.mu) +
                         "; refine the grid");
  return res;
}

double coercivity_mu(const RadialFunction &Q, const RadialFunction &rho) {
  return coercivity_spectrum(Q, rho).mu;
}

double GroundStateData::lp1(double p) const {
  auto it = norms.lp1.find(p);
  if (it != norms.lp1.end())
    return it->second;
  return (grid->w.array() * Q.real().array().abs().pow(p + 1)).sum();
}

GroundStateData build_ground_state(const Grid &grid, const std::vector<double> &ps,
                                   bool with_mu) {
  GroundStateData gs;
  gs.dim = grid->dim;
  gs.grid = grid;
  gs.Q = solve_Q(grid->dim, grid);
  gs.rho = solve_rho(gs.Q);
  const auto &g = *grid;
  const RVec Q = gs.Q.real();
  const double q = gs.q();
  gs.norms.mass = inner(g, Q, Q);
  const RVec dQ = g.d1 * Q;
  gs.norms.grad = inner(g, dQ, dQ);
  gs.norms.crit = (g.w.array() * Q.array().abs().pow(2 + q)).sum();
  gs.norms.yQ = (g.w.array() * (g.r.array() * Q.array()).square()).sum();
  gs.norms.y2Q = (g.w.array() * (g.r.array().square() * Q.array()).square()).sum();
  for (double p : ps)
    gs.norms.lp1[p] = (g.w.array() * Q.array().abs().pow(p + 1)).sum();
  if (with_mu)
    gs.mu = coercivity_mu(gs.Q, gs.rho);
  return gs;
}

GroundStateResiduals ground_state_residuals(const GroundStateData &gs) {
  const auto &g = *gs.grid;
  const RVec Q = gs.Q.real(), rho = gs.rho.real();
  const double q = gs.q();
  GroundStateResiduals r;
  RVec ode = g.lap * Q - Q + (Q.array().abs().pow(q) * Q.array()).matrix();
  r.ode = ode.cwiseAbs().maxCoeff() / Q.maxCoeff();
  auto nrm = [&](const RVec &f) { return std::sqrt(inner(g, f, f)); };
  const RVec LQ = lambda_apply(g, Q);
  const RVec y2Q = (g.r.array().square() * Q.array()).matrix();
  r.lminus_q = nrm(apply_Lminus(g, Q, Q)) / nrm(Q);
  r.lplus_lq = nrm(apply_Lplus(g, Q, LQ) + 2 * Q) / nrm(2 * Q);
  r.lminus_y2q = nrm(apply_Lminus(g, Q, y2Q) + 4 * LQ) / nrm(4 * LQ);
  r.lplus_rho = nrm(apply_Lplus(g, Q, rho) - y2Q) / nrm(y2Q);
  const auto &n = gs.norms;
  r.pohozaev = std::abs(0.5 * n.grad - gs.dim / (2.0 * gs.dim + 4) * n.crit) / n.grad;
  r.pohozaev_mass = std::abs(n.grad + n.mass - n.crit) / n.crit;
  const double qr = inner(g, Q, rho);
  r.q_rho_literal = qr / (0.5 * n.y2Q) - 1.0;
  r.q_rho_corrected = qr / (0.5 * n.yQ) - 1.0;
  r.positive = (Q.array() > 0).all();
  r.decreasing = true;
  for (int i = 1; i < g.n; ++i)
    if (!(Q(i) < Q(i - 1)))
      r.decreasing = false;
  return r;
}

LinearizedSolver::LinearizedSolver(const GroundStateData &gs)
    : gs_(&gs), n_(gs.grid->n) {
  const auto &g = *gs.grid;
  const RVec Q = gs.Q.real();
  plus_.compute(lplus_matrix(g, Q, 1 + gs.q()));
  if (plus_.info() != Eigen::Success)
    throw NumericalError("L+ factorization failed");
  SpMat lm = lplus_matrix(g, Q, 1.0);
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < lm.outerSize(); ++k)
    for (SpMat::InnerIterator it(lm, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value());
  for (int i = 0; i < n_; ++i) {
    t.emplace_back(i, n_, Q(i));
    t.emplace_back(n_, i, g.w(i) * Q(i));
  }
  SpMat b(n_ + 1, n_ + 1);
  b.setFromTriplets(t.begin(), t.end());
  minus_.compute(b);
  if (minus_.info() != Eigen::Success)
    throw NumericalError("bordered L- factorization failed");
}

RVec LinearizedSolver::solve_plus(const RVec &rhs) const { return plus_.solve(rhs); }

RVec LinearizedSolver::solve_minus(const RVec &rhs, double *defect) const {
  RVec ext(n_ + 1);
  ext.head(n_) = rhs;
  ext(n_) = 0;
  RVec x = minus_.solve(ext);
  if (defect)
    *defect = x(n_);
  return x.head(n_);
}

} // namespace mmblow
