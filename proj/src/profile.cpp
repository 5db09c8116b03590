#include "mmblow/profile.hpp"

#include <cmath>

#include <boost/math/quadrature/gauss.hpp>

#include "series.hpp"

namespace mmblow {

namespace nl {

double F(cplx z, double e) { return std::pow(std::abs(z), e + 2) / (e + 2); }

cplx f(cplx z, double e) { return std::pow(std::abs(z), e) * z; }

double dF(cplx z, cplx w, double e) { return std::real(f(z, e) * std::conj(w)); }

cplx df(cplx z, cplx w, double e) {
  const double a = std::abs(z);
  if (a == 0)
    return 0.0;
  return std::pow(a, e) * w + e * std::pow(a, e - 2) * std::real(z * std::conj(w)) * z;
}

double d2F(cplx z, cplx w, double e) { return std::real(df(z, w, e) * std::conj(w)); }

double remainder(cplx z, cplx w, double e) {
  if (std::abs(w) <= 0.5 * std::abs(z)) {
    // ∫_0^1 (1-t) d²F(z+tw)(w,w) dt has no cancellation for small w.
    return boost::math::quadrature::gauss<double, 8>::integrate(
        [&](double t) { return (1 - t) * d2F(z + t * w, w, e); }, 0.0, 1.0);
  }
  return F(z + w, e) - F(z, e) - dF(z, w, e);
}

} // namespace nl

using detail::Series;

namespace {

class Builder {
public:
  Builder(ProfileExpansion &e)
      : e_(e), g_(e.grid()), Q_(e.gs->Q.real()), deg_(2 * e.K + 3),
        r2_(g_.r.array().square().matrix().cast<cplx>()) {}

  Series P() const {
    Series s(deg_);
    s.add(0, 0, Q_.cast<cplx>());
    for (const auto &[jk, t] : e_.terms) {
      const auto [j, k] = jk;
      s.add(2 * j, k + 1, t.plus.cast<cplx>());
      s.add(2 * j + 1, k + 1, I * t.minus.cast<cplx>());
    }
    return s;
  }

  Series theta() const {
    Series s(deg_);
    for (const auto &[jk, t] : e_.terms)
      s.add(2 * jk.first, jk.second + 1, CVec::Constant(g_.n, t.beta));
    return s;
  }

  // Coefficients of iP_s + ΔP - P + f(P) + a g(P) + θ|y|²P/4.
  Series equation() const {
    const Series P = this->P(), th = theta();
    Series E(deg_);
    for (const auto &[k, v] : P.c) {
      const auto [m, n] = k;
      if (m > 0) {
        Series d(deg_);
        d.add(m - 1, n, static_cast<double>(m) * v);
        E += (th * d).times(CVec::Constant(g_.n, I));
        E.add(m + 1, n, -I * static_cast<double>(m) * v);
      }
      if (n > 0)
        E.add(m + 1, n, -I * (n * e_.alpha) * v);
    }
    for (const auto &[k, v] : P.c)
      E.add(k.first, k.second, apply(g_.lap, v) - v);
    Series S = P * P.conj();
    Series sig(deg_);
    for (const auto &[k, v] : S.c)
      if (k != Series::Key{0, 0})
        sig.c.emplace(k, v.real().cast<cplx>());
    const RVec S0 = Q_.array().square();
    E += power_series(S0, sig, e_.q() / 2) * P;
    E += (power_series(S0, sig, (e_.p - 1) / 2) * P).shifted(0, 1);
    E += (th * P).times(0.25 * r2_);
    return E;
  }

  void run() {
    const int n = g_.n;
    LinearizedSolver L(*e_.gs);
    const RVec V = L.solve_plus(0.25 * (g_.r.array().square() * Q_.array()).matrix());
    const double qn = std::sqrt(inner(g_, Q_, Q_));
    for (int lev = 0; lev <= e_.K; ++lev) {
      for (int j = 0; j <= lev; ++j)
        e_.terms[{j, lev - j}] = ProfileTerm{RVec::Zero(n), RVec::Zero(n), 0.0};
      std::map<int, RVec> U;
      for (int j = 0; j <= lev; ++j) {
        const int k = lev - j;
        const RVec R = equation().get(2 * j, k + 1, n).real();
        U[j] = L.solve_plus(R);
        e_.terms[{j, k}].plus = U[j];
      }
      // The imaginary equation at (j,k) sees P+_{j+1,k-1} through β_{0,0},
      // so β is fixed from the top j downward.
      for (int j = lev; j >= 0; --j) {
        const int k = lev - j;
        auto &t = e_.terms[{j, k}];
        t.beta = 0;
        t.plus = U[j];
        const RVec I0 = equation().get(2 * j + 1, k + 1, n).imag();
        t.beta = 1;
        t.plus = U[j] + V;
        const RVec I1 = equation().get(2 * j + 1, k + 1, n).imag();
        const double c0 = inner(g_, I0, Q_), c1 = inner(g_, I1, Q_);
        if (std::abs(c1 - c0) < 1e-14 * (std::abs(c0) + 1))
          throw NumericalError("build_expansion: solvability condition is degenerate");
        const double bt = -c0 / (c1 - c0);
        t.beta = bt;
        t.plus = U[j] + bt * V;
        const RVec Ik = I0 + bt * (I1 - I0);
        double defect = 0;
        t.minus = L.solve_minus(Ik, &defect);
        const double rel = std::abs(defect) * qn / std::max(std::sqrt(inner(g_, Ik, Ik)), 1e-300);
        e_.max_defect = std::max(e_.max_defect, rel);
        if (rel > 1e-6)
          throw NumericalError("build_expansion: L- solvability defect " +
                               std::to_string(rel) + " above tolerance");
      }
    }
    const Series E = equation();
    double worst = 0;
    for (const auto &[jk, t] : e_.terms) {
      worst = std::max(worst, E.get(2 * jk.first, jk.second + 1, n).real().cwiseAbs().maxCoeff());
      worst = std::max(worst, E.get(2 * jk.first + 1, jk.second + 1, n).imag().cwiseAbs().maxCoeff());
    }
    e_.max_cancellation = worst;
  }

private:
  ProfileExpansion &e_;
  const RadialGrid &g_;
  RVec Q_;
  int deg_;
  CVec r2_;
};

} // namespace

double ProfileExpansion::beta_formula() const {
  return 2.0 * dim * (p - 1) / (p + 1) * gs->lp1(p) / gs->norms.yQ;
}

ProfileExpansion build_expansion(std::shared_ptr<const GroundStateData> gs, double p,
                                 int K) {
  require(gs != nullptr, "build_expansion: missing ground state");
  const int N = gs->dim;
  require(p > 1 && p < 1 + 4.0 / N, "build_expansion: need 1 < p < 1 + 4/N");
  require(K >= 1 && K <= 4, "build_expansion: K must lie in [1, 4]");
  ProfileExpansion e;
  e.gs = gs;
  e.dim = N;
  e.p = p;
  e.K = K;
  e.alpha = 2 - N * (p - 1) / 2;
  require(e.alpha >= 0.05, "build_expansion: alpha below 0.05 (p too close to 1+4/N)");
  Builder(e).run();
  e.beta = e.terms.at({0, 0}).beta;
  return e;
}

CVec ProfileExpansion::eval_P(double b, double lambda) const {
  const double a = std::pow(lambda, alpha);
  CVec P = gs->Q.values;
  for (const auto &[jk, t] : terms) {
    const auto [j, k] = jk;
    const double ak = std::pow(a, k + 1);
    P += (std::pow(b, 2 * j) * ak) * t.plus.cast<cplx>();
    P += (I * (std::pow(b, 2 * j + 1) * ak)) * t.minus.cast<cplx>();
  }
  return P;
}

CVec ProfileExpansion::dP_db(double b, double lambda) const {
  const double a = std::pow(lambda, alpha);
  CVec d = CVec::Zero(grid().n);
  for (const auto &[jk, t] : terms) {
    const auto [j, k] = jk;
    const double ak = std::pow(a, k + 1);
    if (j > 0)
      d += (2 * j * std::pow(b, 2 * j - 1) * ak) * t.plus.cast<cplx>();
    d += (I * ((2 * j + 1) * std::pow(b, 2 * j) * ak)) * t.minus.cast<cplx>();
  }
  return d;
}

CVec ProfileExpansion::dP_dlambda(double b, double lambda) const {
  const double a = std::pow(lambda, alpha);
  CVec d = CVec::Zero(grid().n);
  for (const auto &[jk, t] : terms) {
    const auto [j, k] = jk;
    const double f = (k + 1) * alpha * std::pow(a, k + 1) / lambda;
    d += (std::pow(b, 2 * j) * f) * t.plus.cast<cplx>();
    d += (I * (std::pow(b, 2 * j + 1) * f)) * t.minus.cast<cplx>();
  }
  return d;
}

double ProfileExpansion::theta(double b, double lambda) const {
  const double a = std::pow(lambda, alpha);
  double th = 0;
  for (const auto &[jk, t] : terms)
    th += std::pow(b, 2 * jk.first) * std::pow(a, jk.second + 1) * t.beta;
  return th;
}

double default_eps_prime(const GroundStateData &gs) {
  const auto &g = *gs.grid;
  return 0.5 * fitted_decay_rate(g, gs.Q.real(), 8.0, 0.7 * g.rmax);
}

namespace {
void check_small(double b, double lambda) {
  require(std::abs(b) <= 0.5 && lambda >= 0 && lambda <= 0.5,
          "profile: need |b| <= 0.5 and 0 <= lambda <= 0.5");
}
} // namespace

RadialFunction eval_P(const ProfileExpansion &e, double b, double lambda) {
  check_small(b, lambda);
  return {e.gs->grid, e.eval_P(b, lambda), Decay::exponential};
}

CVec residual_Psi_field(const ProfileExpansion &e, double b, double lambda) {
  check_small(b, lambda);
  const auto &g = e.grid();
  const double a = std::pow(lambda, e.alpha);
  const double th = e.theta(b, lambda);
  const double bs = th - b * b;
  const CVec P = e.eval_P(b, lambda);
  // P_s through ∂λ/∂s = -bλ, ∂b/∂s = θ - b².
  CVec Ps = CVec::Zero(g.n);
  for (const auto &[jk, t] : e.terms) {
    const auto [j, k] = jk;
    const int n = k + 1;
    auto dterm = [&](int m) {
      double v = -n * e.alpha * std::pow(b, m + 1) * std::pow(a, n);
      if (m > 0)
        v += m * std::pow(b, m - 1) * bs * std::pow(a, n);
      return v;
    };
    Ps += dterm(2 * j) * t.plus.cast<cplx>();
    Ps += (I * dterm(2 * j + 1)) * t.minus.cast<cplx>();
  }
  const RVec absP = P.cwiseAbs();
  CVec psi = I * Ps + apply(g.lap, P) - P;
  psi.array() += absP.array().pow(e.q()) * P.array();
  psi.array() += a * absP.array().pow(e.p - 1) * P.array();
  psi.array() += 0.25 * th * g.r.array().square() * P.array();
  return psi;
}

double residual_Psi(const ProfileExpansion &e, double b, double lambda,
                    double eps_prime) {
  const auto &g = e.grid();
  CVec w = residual_Psi_field(e, b, lambda);
  w.array() *= (eps_prime * g.r.array()).exp();
  return std::sqrt(h1sq(g, w));
}

ProfileEval evaluate(const ProfileExpansion &e, double b, double lambda,
                     double eps_prime) {
  ProfileEval out;
  out.P = eval_P(e, b, lambda);
  out.theta = e.theta(b, lambda);
  out.eps_prime = eps_prime;
  out.psi_norm = residual_Psi(e, b, lambda, eps_prime);
  return out;
}

CVec rescale_profile(const ProfileExpansion &e, double lambda, double b, double gamma,
                     const RadialGrid &target) {
  require(lambda > 0, "rescale_profile: lambda must be positive");
  check_small(b, lambda);
  require(target.dim == e.dim, "rescale_profile: dimension mismatch");
  const CVec P = e.eval_P(b, lambda);
  const RVec y = target.r / lambda;
  CVec v = interpolate(e.grid(), P, y);
  const double peak = v.cwiseAbs().maxCoeff();
  const double amp = std::pow(lambda, -0.5 * e.dim);
  for (int i = 0; i < target.n; ++i) {
    const double x = target.r(i);
    if (std::abs(v(i)) > 1e-12 * peak) {
      const double dphase = std::abs(b) * x * target.h / (2 * lambda * lambda);
      if (dphase > M_PI / 4)
        throw ConfigError("rescale_profile: grid too coarse for the quadratic phase");
    }
    const double phase = -b * x * x / (4 * lambda * lambda) + gamma;
    v(i) *= amp * std::polar(1.0, phase);
  }
  return v;
}

EnergyParts energy_parts(const RadialGrid &g, const CVec &u, double p, int sign) {
  const double q = 4.0 / g.dim;
  const RVec a = u.cwiseAbs();
  EnergyParts e;
  e.kinetic = 0.5 * grad2sq(g, u);
  e.critical = (g.w.array() * a.array().pow(q + 2)).sum() / (q + 2);
  e.lower = (g.w.array() * a.array().pow(p + 1)).sum() / (p + 1);
  e.total = e.kinetic - e.critical - sign * e.lower;
  return e;
}

double energy(const RadialGrid &g, const CVec &u, double p, int sign) {
  return energy_parts(g, u, p, sign).total;
}

double profile_energy(const ProfileExpansion &e, double lambda, double b) {
  check_small(b, lambda);
  require(lambda > 0, "profile_energy: lambda must be positive");
  const auto &g = e.grid();
  const CVec P = e.eval_P(b, lambda);
  CVec D = apply(g.d1, P);
  D.array() -= I * (0.5 * b) * g.r.array() * P.array();
  const RVec a = P.cwiseAbs();
  const double q = e.q();
  const double kin = 0.5 * norm2sq(g, D);
  const double crit = (g.w.array() * a.array().pow(q + 2)).sum() / (q + 2);
  const double low = (g.w.array() * a.array().pow(e.p + 1)).sum() / (e.p + 1);
  return (kin - crit - std::pow(lambda, e.alpha) * low) / (lambda * lambda);
}

double profile_mass(const ProfileExpansion &e, double lambda, double b) {
  check_small(b, lambda);
  return norm2sq(e.grid(), e.eval_P(b, lambda));
}

} // namespace mmblow
