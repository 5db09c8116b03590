#include "mmblow/modulation.hpp"

#include <algorithm>
#include <cmath>

#include "mmblow/fd.hpp"

namespace mmblow {

CVec pullback(const RadialGrid &phys, const CVec &u, const RadialGrid &prof,
              double lambda, double b, double gamma) {
  const RVec x = lambda * prof.r;
  CVec U = interpolate(phys, u, x);
  const double amp = std::pow(lambda, 0.5 * prof.dim);
  for (int i = 0; i < prof.n; ++i) {
    const double y = prof.r(i);
    U(i) *= amp * std::polar(1.0, 0.25 * b * y * y - gamma);
  }
  return U;
}

CVec recompose(const ProfileExpansion &e, const ParamState &st, const CVec &eps,
               const RadialGrid &phys) {
  const auto &g = e.grid();
  const CVec V = e.eval_P(st.b, st.lambda) + eps;
  CVec u = interpolate(g, V, phys.r / st.lambda);
  const double amp = std::pow(st.lambda, -0.5 * g.dim);
  for (int i = 0; i < phys.n; ++i) {
    const double x = phys.r(i);
    u(i) *= amp * std::polar(1.0, -st.b * x * x / (4 * st.lambda * st.lambda) + st.gamma);
  }
  return u;
}

namespace {

struct Pairings {
  Eigen::Vector3d G;
  Eigen::Matrix3d J;
  CVec U, eps;
  std::array<double, 3> ortho{};
};

Pairings pairings(const RadialGrid &phys, const CVec &u, const ProfileExpansion &e,
                  double lambda, double b, double gamma) {
  const auto &g = e.grid();
  Pairings out;
  out.U = pullback(phys, u, g, lambda, b, gamma);
  const CVec P = e.eval_P(b, lambda);
  const CVec Pl = e.dP_dlambda(b, lambda), Pb = e.dP_db(b, lambda);
  out.eps = out.U - P;
  const CVec &U = out.U, &eps = out.eps;
  const RVec y2 = g.r.array().square();

  std::array<CVec, 3> X, Xl, Xb;
  X[0] = I * lambda_apply(g, P);
  X[1] = (y2.array() * P.array()).matrix();
  X[2] = I * e.gs->rho.values;
  Xl[0] = I * lambda_apply(g, Pl);
  Xl[1] = (y2.array() * Pl.array()).matrix();
  Xl[2] = CVec::Zero(g.n);
  Xb[0] = I * lambda_apply(g, Pb);
  Xb[1] = (y2.array() * Pb.array()).matrix();
  Xb[2] = CVec::Zero(g.n);

  CVec dl = lambda_apply(g, U);
  dl.array() -= I * (0.5 * b) * y2.array() * U.array();
  dl = dl / lambda - Pl;
  CVec db = (I * 0.25) * (y2.array() * U.array()).matrix() - Pb;
  CVec dg = -I * U;

  const double un = std::sqrt(norm2sq(g, U));
  for (int k = 0; k < 3; ++k) {
    out.G(k) = inner(g, eps, X[k]);
    out.J(k, 0) = inner(g, dl, X[k]) + inner(g, eps, Xl[k]);
    out.J(k, 1) = inner(g, db, X[k]) + inner(g, eps, Xb[k]);
    out.J(k, 2) = inner(g, dg, X[k]);
    out.ortho[k] = std::abs(out.G(k)) / (std::sqrt(norm2sq(g, X[k])) * un);
  }
  return out;
}

} // namespace

Decomposition decompose(const RadialGrid &phys, const CVec &u, const ProfileExpansion &e,
                        const ParamState &guess) {
  require(guess.lambda > 0, "decompose: guess lambda must be positive");
  double lam = guess.lambda, b = guess.b, gam = guess.gamma;
  Decomposition d;
  for (int it = 1; it <= 40; ++it) {
    if (!(lam > 0 && lam <= 0.5 && std::abs(b) <= 0.5))
      throw NumericalError("decompose: Newton left the modulation tube");
    Pairings pr = pairings(phys, u, e, lam, b, gam);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(pr.J);
    if (lu.rcond() < 1e-12)
      throw NumericalError("decompose: Jacobian is near singular");
    Eigen::Vector3d step = -lu.solve(pr.G);
    const double rel = std::abs(step(0)) / lam;
    if (rel > 0.2)
      step *= 0.2 / rel;
    lam += step(0);
    b += step(1);
    gam += step(2);
    d.iterations = it;
    if (std::max({std::abs(step(0)) / lam, std::abs(step(1)), std::abs(step(2))}) <= 1e-13) {
      Pairings fin = pairings(phys, u, e, lam, b, gam);
      d.params = guess;
      d.params.lambda = lam;
      d.params.b = b;
      d.params.gamma = gam;
      d.eps = fin.eps;
      d.ortho = fin.ortho;
      return d;
    }
  }
  throw NumericalError("decompose: Newton iteration did not converge");
}

DiagnosticsConfig default_diagnostics(const ProfileExpansion &e) {
  DiagnosticsConfig c;
  c.K = e.K;
  c.eps_prime = default_eps_prime(*e.gs);
  c.M = 0.5 * std::min(0.5, 4 / e.alpha - 2);
  return c;
}

void validate(const DiagnosticsConfig &cfg, double alpha) {
  require(cfg.M > 0 && cfg.M < std::min(0.5, 4 / alpha - 2),
          "diagnostics: M must lie in (0, min(1/2, 4/alpha - 2))");
  require(cfg.m > 0, "diagnostics: m must be positive");
  require(cfg.K >= 1, "diagnostics: K must be at least 1");
  require(cfg.s_star >= 1, "diagnostics: s_star must be at least 1");
}

double diag_H(const CVec &eps, const ProfileExpansion &e, double b, double lambda) {
  const auto &g = e.grid();
  const CVec P = e.eval_P(b, lambda);
  const double q = e.q(), gp = e.p - 1;
  double rf = 0, rg = 0;
  for (int i = 0; i < g.n; ++i) {
    rf += g.w(i) * nl::remainder(P(i), eps(i), q);
    rg += g.w(i) * nl::remainder(P(i), eps(i), gp);
  }
  const double yeps = (g.w.array() * (g.r.array() * eps.array().abs()).square()).sum();
  return 0.5 * h1sq(g, eps) + b * b * yeps - rf - std::pow(lambda, e.alpha) * rg;
}

double diag_S(double H, double lambda, const DiagnosticsConfig &cfg) {
  return std::pow(lambda, -cfg.m) * H;
}

TrackPoint make_track_point(const Decomposition &d, const ProfileExpansion &e,
                            const DiagnosticsConfig &cfg) {
  const auto &g = e.grid();
  TrackPoint tp;
  tp.st = d.params;
  tp.eps_H1 = std::sqrt(h1sq(g, d.eps));
  tp.eps_weighted =
      std::sqrt((g.w.array() * (g.r.array() * d.eps.array().abs()).square()).sum());
  tp.eps_Q = inner(g, d.eps, e.gs->Q.values);
  tp.ortho = d.ortho;
  tp.H = diag_H(d.eps, e, d.params.b, d.params.lambda);
  tp.S = diag_S(tp.H, d.params.lambda, cfg);
  return tp;
}

void track_mod(ModulationTrack &track, const ProfileExpansion &e, int stencil) {
  auto &pts = track.points;
  const int n = static_cast<int>(pts.size());
  if (n < 3)
    throw ConfigError("track_mod: need at least 3 snapshots");
  const int w = std::min(stencil, n);
  for (int i = 0; i < n; ++i) {
    int a = i - w / 2;
    a = std::clamp(a, 0, n - w);
    const double t0 = pts[i].st.t;
    const double scale = std::abs(pts[std::min(i + 1, n - 1)].st.t - pts[std::max(i - 1, 0)].st.t);
    std::vector<double> x(w), L(w), B(w), G(w);
    for (int k = 0; k < w; ++k) {
      const auto &st = pts[a + k].st;
      x[k] = (st.t - t0) / scale;
      L[k] = std::log(st.lambda);
      B[k] = st.b;
      G[k] = st.gamma;
    }
    const auto wts = fd::fornberg(0.0, x, 1);
    double lt = 0, bt = 0, gt = 0;
    for (int k = 0; k < w; ++k) {
      lt += wts[1][k] * L[k];
      bt += wts[1][k] * B[k];
      gt += wts[1][k] * G[k];
    }
    lt /= scale;
    bt /= scale;
    gt /= scale;
    const auto &st = pts[i].st;
    const double l2 = st.lambda * st.lambda;
    pts[i].mod[0] = l2 * lt + st.b;
    pts[i].mod[1] = l2 * bt + st.b * st.b - e.theta(st.b, st.lambda);
    pts[i].mod[2] = 1 - l2 * gt;
  }
}

BootstrapReport bootstrap_monitor(ModulationTrack &track, const DiagnosticsConfig &cfg,
                                  const LawConstants &law) {
  validate(cfg, law.alpha);
  BootstrapReport rep;
  const int K = cfg.K;
  for (size_t i = 0; i < track.points.size(); ++i) {
    auto &tp = track.points[i];
    const double s = tp.st.s;
    tp.checked = s >= cfg.s_star;
    if (!tp.checked)
      continue;
    const double en = tp.eps_H1 * tp.eps_H1 + tp.st.b * tp.st.b * tp.eps_weighted * tp.eps_weighted;
    const double cl = closeness(tp.st.lambda, tp.st.b, s, law);
    tp.boot1 = en < std::pow(s, -2.0 * K);
    tp.boot2 = cl < std::pow(s, -cfg.M);
    tp.re1 = en <= std::pow(s, -(2.0 * K + 2));
    tp.re2 = cl <= std::pow(s, -0.5) + std::pow(s, 2 - 4 / law.alpha);
    const std::array<std::pair<bool, const char *>, 4> checks{
        {{tp.boot1, "bootstrap-eps"},
         {tp.boot2, "bootstrap-law"},
         {tp.re1, "reestimate-eps"},
         {tp.re2, "reestimate-law"}}};
    for (const auto &[ok, name] : checks) {
      if (ok)
        continue;
      ++rep.violations;
      if (!rep.first_index) {
        rep.first_index = i;
        rep.first_s = s;
        rep.first_check = name;
      }
    }
  }
  return rep;
}

} // namespace mmblow
