#include "mmblow/radial.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include <boost/math/special_functions/bernoulli.hpp>

#include "mmblow/fd.hpp"

namespace mmblow {

double sphere_area(int dim) {
  return 2.0 * std::pow(M_PI, 0.5 * dim) / std::tgamma(0.5 * dim);
}

namespace {

// Endpoint corrections for even dimension. The midpoint rule applied to
// r^{N-1} f(r) with f even misses the Hurwitz zeta terms
// B_{q+1}(1/2)/(q+1) h^{q+1} for each odd power q = N-1+2m; six corrected
// weights cancel the first six.
std::vector<double> origin_corrections(int dim) {
  constexpr int M = 6;
  if (dim % 2 == 1)
    return std::vector<double>(M, 0.0);
  Eigen::MatrixXd A(M, M);
  Eigen::VectorXd rhs(M);
  for (int row = 0; row < M; ++row) {
    const int q = dim - 1 + 2 * row;
    for (int j = 0; j < M; ++j)
      A(row, j) = std::pow(j + 0.5, q);
    const int n = q + 1; // even
    const double bn = boost::math::bernoulli_b2n<double>(n / 2);
    const double bhalf = (std::pow(2.0, 1 - n) - 1.0) * bn;
    rhs(row) = bhalf / (q + 1);
  }
  Eigen::VectorXd d = A.colPivHouseholderQr().solve(rhs);
  return {d.data(), d.data() + M};
}

std::vector<double> stencil(int deriv) {
  const int hw = RadialGrid::half_width;
  std::vector<double> x;
  for (int k = -hw; k <= hw; ++k)
    x.push_back(k);
  return fd::fornberg(0.0, x, 2)[deriv];
}

} // namespace

Grid make_grid(int dim, double rmax, int n) {
  require(dim >= 1, "make_grid: dim must be >= 1");
  require(rmax > 0, "make_grid: rmax must be positive");
  require(n >= 64, "make_grid: need at least 64 nodes");
  require(n / rmax >= 8.0, "make_grid: fewer than 8 nodes per unit radius");

  auto g = std::make_shared<RadialGrid>();
  g->dim = dim;
  g->rmax = rmax;
  g->n = n;
  g->h = rmax / n;
  g->omega = sphere_area(dim);
  const double h = g->h;
  g->r.resize(n);
  g->w.resize(n);
  for (int i = 0; i < n; ++i) {
    g->r(i) = (i + 0.5) * h;
    g->w(i) = g->omega * std::pow(g->r(i), dim - 1) * h;
  }
  auto d = origin_corrections(dim);
  for (int j = 0; j < static_cast<int>(d.size()) && j < n; ++j)
    g->w(j) += g->omega * std::pow(h, dim) * d[j] * std::pow(j + 0.5, dim - 1);

  const auto c2 = stencil(2), c1 = stencil(1);
  const int hw = RadialGrid::half_width;
  std::vector<Eigen::Triplet<double>> tl, td;
  for (int i = 0; i < n; ++i) {
    const double ri = g->r(i);
    for (int k = -hw; k <= hw; ++k) {
      int j = i + k;
      if (j >= n)
        continue;
      if (j < 0)
        j = -1 - j;
      const double a2 = c2[k + hw] / (h * h), a1 = c1[k + hw] / h;
      tl.emplace_back(i, j, a2 + (dim - 1) / ri * a1);
      td.emplace_back(i, j, a1);
    }
  }
  g->lap.resize(n, n);
  g->lap.setFromTriplets(tl.begin(), tl.end());
  g->d1.resize(n, n);
  g->d1.setFromTriplets(td.begin(), td.end());

  // Unit Gaussian, narrowed on grids too short to hold its tail.
  const double sig = std::min(1.0, rmax / 10);
  RVec gauss = (-0.5 * (g->r.array() / sig).square()).exp();
  const double exact = std::pow(2.0 * M_PI, 0.5 * dim) * std::pow(sig, dim);
  const double err = std::abs(g->w.dot(gauss) - exact) / exact;
  if (!(err <= 1e-10))
    throw ConfigError("make_grid: Gaussian quadrature error " +
                      std::to_string(err) + " exceeds 1e-10");
  return g;
}

bool RadialFunction::finite() const { return values.allFinite(); }

bool RadialFunction::decay_ok(double rel) const {
  if (decay != Decay::exponential)
    return true;
  const double peak = values.cwiseAbs().maxCoeff();
  return std::abs(values(values.size() - 1)) <= rel * peak;
}

RVec apply(const SpMat &m, const RVec &f) { return m * f; }

CVec apply(const SpMat &m, const CVec &f) {
  RVec re = m * f.real(), im = m * f.imag();
  CVec out(f.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

double inner(const RadialGrid &g, const RVec &f, const RVec &h) {
  return (g.w.array() * f.array() * h.array()).sum();
}

double inner(const RadialGrid &g, const CVec &f, const CVec &h) {
  return (g.w.array() *
          (f.real().array() * h.real().array() + f.imag().array() * h.imag().array()))
      .sum();
}

double norm2sq(const RadialGrid &g, const CVec &f) {
  return (g.w.array() * f.array().abs2()).sum();
}

double grad2sq(const RadialGrid &g, const CVec &f) {
  return norm2sq(g, apply(g.d1, f));
}

double h1sq(const RadialGrid &g, const CVec &f) {
  return norm2sq(g, f) + grad2sq(g, f);
}

CVec lambda_apply(const RadialGrid &g, const CVec &f) {
  CVec df = apply(g.d1, f);
  return 0.5 * g.dim * f + (g.r.array() * df.array()).matrix();
}

RVec lambda_apply(const RadialGrid &g, const RVec &f) {
  RVec df = g.d1 * f;
  return 0.5 * g.dim * f + (g.r.array() * df.array()).matrix();
}

namespace {
void same_grid(const RadialFunction &a, const RadialFunction &b) {
  if (a.grid != b.grid)
    throw ConfigError("grid mismatch");
}
} // namespace

RadialFunction laplacian(const RadialFunction &f) {
  return {f.grid, apply(f.grid->lap, f.values), f.decay};
}

RadialFunction lambda_op(const RadialFunction &f) {
  return {f.grid, lambda_apply(*f.grid, f.values), f.decay};
}

double inner(const RadialFunction &f, const RadialFunction &g) {
  same_grid(f, g);
  return inner(*f.grid, f.values, g.values);
}

PairingResiduals check_pairing_identities(const RadialFunction &w, double q,
                                          double p) {
  const auto &g = *w.grid;
  const RVec f = w.real();
  const RVec lw = lambda_apply(g, f);
  const RVec rp = g.r.array().pow(p);
  PairingResiduals out;
  const RVec wp = (rp.array() * f.array()).matrix();
  out.weight = std::abs(inner(g, RVec((rp.array() * wp.array()).matrix()), lw) +
                        p * inner(g, wp, wp));
  const RVec lapw = g.lap * f;
  const RVec df = g.d1 * f;
  out.kinetic = std::abs(inner(g, RVec(-lapw), lw) - inner(g, df, df));
  const RVec fq = f.array().abs().pow(q) * f.array();
  const double lq = (g.w.array() * f.array().abs().pow(q + 2)).sum();
  out.potential =
      std::abs(inner(g, fq, lw) - g.dim * q / (2.0 * (q + 2)) * lq);
  return out;
}

namespace {

template <class Vec>
Vec interp_impl(const RadialGrid &g, const Vec &f, const RVec &x) {
  constexpr int P = 10;
  Vec out = Vec::Zero(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double xa = std::abs(x(k));
    if (xa >= g.rmax)
      continue;
    const double t = xa / g.h - 0.5;
    const int j0 = static_cast<int>(std::floor(t)) - P / 2 + 1;
    typename Vec::Scalar acc{0};
    for (int a = 0; a < P; ++a) {
      int j = j0 + a;
      if (j >= g.n)
        break;
      double wgt = 1.0;
      for (int b = 0; b < P; ++b)
        if (b != a)
          wgt *= (t - (j0 + b)) / static_cast<double>(a - b);
      if (j < 0)
        j = -1 - j;
      acc += wgt * f(j);
    }
    out(k) = acc;
  }
  return out;
}

} // namespace

CVec interpolate(const RadialGrid &g, const CVec &f, const RVec &x) {
  return interp_impl(g, f, x);
}

RVec interpolate(const RadialGrid &g, const RVec &f, const RVec &x) {
  return interp_impl(g, f, x);
}

double fitted_decay_rate(const RadialGrid &g, const RVec &f, double r0,
                         double r1) {
  std::vector<double> xs, ys;
  for (int i = 0; i < g.n; ++i) {
    const double r = g.r(i);
    if (r < r0 || r > r1 || f(i) == 0.0)
      continue;
    xs.push_back(r);
    ys.push_back(std::log(std::abs(f(i))) + 0.5 * (g.dim - 1) * std::log(r));
  }
  if (xs.size() < 2)
    throw ConfigError("fitted_decay_rate: window holds fewer than two nodes");
  return -fd::fit_line(xs, ys).slope;
}

void write_csv(std::ostream &os, const RadialFunction &f) {
  os << "r,re,im\n";
  os.precision(17);
  for (int i = 0; i < f.grid->n; ++i)
    os << f.grid->r(i) << ',' << f.values(i).real() << ',' << f.values(i).imag()
       << '\n';
}

std::string grid_json(const RadialGrid &g) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"dim\": " << g.dim << ", \"rmax\": " << g.rmax << ", \"n\": " << g.n
     << "}";
  return os.str();
}

} // namespace mmblow
