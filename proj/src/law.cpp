#include "mmblow/law.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

namespace mmblow {

LawConstants make_law_constants(const ProfileExpansion &e, double E0) {
  LawConstants c;
  c.dim = e.dim;
  c.p = e.p;
  c.alpha = e.alpha;
  c.beta = e.beta;
  c.yQ = e.gs->norms.yQ;
  c.E0 = E0;
  c.C0 = 8 * E0 / c.yQ;
  c.B = 2 * c.beta / (2 - c.alpha);
  require(c.beta > 0, "law: beta must be positive");
  c.lambda0 = 0.1;
  if (c.C0 < 0)
    c.lambda0 = std::min(0.1, std::pow(c.B / (2 * -c.C0), 1 / (2 - c.alpha)));
  const double a = c.alpha, k = 0.5 * a * std::sqrt(c.B);
  c.C = a / (4 - a) * std::pow(k, -4 / a);
  c.C_lambda = std::pow(c.C, -2 / (4 - a)) * std::pow(k, -2 / a);
  c.C_b = 2 / a * std::pow(c.C, -a / (4 - a));
  return c;
}

double lambda_exponent(int dim, double p) {
  const double a = 2 - dim * (p - 1) / 2;
  return 2 / (4 - a);
}

double b_exponent(int dim, double p) {
  const double a = 2 - dim * (p - 1) / 2;
  return a / (4 - a);
}

AppLaw lambda_b_app(double s, const LawConstants &c) {
  require(s > 0, "lambda_b_app: s must be positive");
  const double a = c.alpha;
  return {std::pow(0.5 * a * std::sqrt(c.B), -2 / a) * std::pow(s, -2 / a), 2 / (a * s)};
}

double F_of_lambda(double lambda, const LawConstants &c) {
  require(lambda > 0 && lambda <= c.lambda0 * (1 + 1e-12),
          "F_of_lambda: need 0 < lambda <= lambda0");
  lambda = std::min(lambda, c.lambda0);
  const double a = c.alpha;
  auto radicand = [&](double mu) { return c.B + c.C0 * std::pow(mu, 2 - a); };
  if (!(radicand(lambda) > 0 && radicand(c.lambda0) > 0))
    throw ConfigError("F_of_lambda: radicand is nonpositive on [lambda, lambda0]");
  if (lambda == c.lambda0)
    return 0.0;
  // μ = e^u removes the endpoint growth of μ^{-α/2-1}.
  auto f = [&](double u) {
    const double mu = std::exp(u);
    return std::pow(mu, -a / 2) / std::sqrt(radicand(mu));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, std::log(lambda), std::log(c.lambda0), 20, 1e-14);
}

double closeness(double lambda, double b, double s, const LawConstants &c) {
  const AppLaw app = lambda_b_app(s, c);
  return std::abs(std::pow(lambda / app.lambda, c.alpha / 2) - 1) +
         std::abs(b / app.b - 1);
}

InitialParams initial_params(double s1, const LawConstants &c, const ProfileExpansion &e) {
  require(s1 >= 50, "initial_params: s1 must be at least 50");
  using boost::math::tools::eps_tolerance;
  using boost::math::tools::toms748_solve;
  InitialParams ip;
  ip.s1 = s1;

  auto gl = [&](double u) { return F_of_lambda(std::exp(u), c) - s1; };
  double hi = std::log(c.lambda0);
  double lo = std::log(std::min(lambda_b_app(s1, c).lambda, c.lambda0 * 0.5));
  while (gl(lo) <= 0) {
    lo -= 1.0;
    if (lo < -700)
      throw NumericalError("initial_params: no bracket for lambda1");
  }
  std::uintmax_t it = 200;
  auto rl = toms748_solve(gl, lo, hi, eps_tolerance<double>(50), it);
  ip.lambda1 = std::exp(0.5 * (rl.first + rl.second));

  auto ge = [&](double b) { return profile_energy(e, ip.lambda1, b) - c.E0; };
  const double bmax = 0.5;
  const double e0 = ge(0.0), e1 = ge(bmax);
  if (!(e0 < 0 && e1 > 0)) {
    std::ostringstream os;
    os << "initial_params: E0 unreachable at lambda1 = " << ip.lambda1
       << "; feasible energy interval [" << e0 + c.E0 << ", " << e1 + c.E0 << "]";
    throw ConfigError(os.str());
  }
  it = 200;
  auto rb = toms748_solve(ge, 0.0, bmax, e0, e1, eps_tolerance<double>(50), it);
  ip.b1 = 0.5 * (rb.first + rb.second);
  ip.closeness = closeness(ip.lambda1, ip.b1, s1, c);
  return ip;
}

double s1_of_t1(double t1, const LawConstants &c) {
  require(t1 < 0, "time_maps: t1 must be negative");
  return std::pow(std::abs(t1 / c.C), -c.alpha / (4 - c.alpha));
}

double t1_of_s1(double s1, const LawConstants &c) {
  require(s1 > 0, "time_maps: s1 must be positive");
  return -c.C * std::pow(s1, -(4 - c.alpha) / c.alpha);
}

TimeMap::TimeMap(std::vector<double> t, const std::vector<double> &lambda, double s1)
    : t_(std::move(t)) {
  require(t_.size() == lambda.size() && t_.size() >= 2,
          "TimeMap: need at least two samples");
  f_.resize(lambda.size());
  for (size_t i = 0; i < lambda.size(); ++i)
    f_[i] = 1 / (lambda[i] * lambda[i]);
  // The anchor is the first sample; a backward trajectory is stored reversed.
  const bool backward = t_[1] < t_[0];
  if (backward) {
    std::reverse(t_.begin(), t_.end());
    std::reverse(f_.begin(), f_.end());
  }
  for (size_t i = 1; i < t_.size(); ++i)
    require(t_[i] > t_[i - 1], "TimeMap: times must be strictly monotone");
  s_.assign(t_.size(), s1);
  if (backward)
    for (size_t i = t_.size() - 1; i-- > 0;)
      s_[i] = s_[i + 1] - integral(i, t_[i + 1]);
  else
    for (size_t i = 0; i + 1 < t_.size(); ++i)
      s_[i + 1] = s_[i] + integral(i, t_[i + 1]);
}

double TimeMap::integral(size_t i, double t) const {
  const size_t n = t_.size();
  const size_t m = std::min<size_t>(4, n);
  size_t a = i >= 1 ? i - 1 : 0;
  if (a + m > n)
    a = n - m;
  auto poly = [&](double x) {
    double s = 0;
    for (size_t j = a; j < a + m; ++j) {
      double l = 1;
      for (size_t k = a; k < a + m; ++k)
        if (k != j)
          l *= (x - t_[k]) / (t_[j] - t_[k]);
      s += l * f_[j];
    }
    return s;
  };
  return boost::math::quadrature::gauss<double, 3>::integrate(poly, t_[i], t);
}

double TimeMap::s_of_t(double t) const {
  require(t >= t_.front() && t <= t_.back(), "TimeMap: t outside the sampled range");
  size_t i = std::upper_bound(t_.begin(), t_.end(), t) - t_.begin();
  i = i == 0 ? 0 : i - 1;
  if (i + 1 == t_.size())
    return s_.back();
  return s_[i] + integral(i, t);
}

double TimeMap::t_of_s(double s) const {
  require(s >= s_.front() && s <= s_.back(), "TimeMap: s outside the sampled range");
  size_t i = std::upper_bound(s_.begin(), s_.end(), s) - s_.begin();
  i = i == 0 ? 0 : i - 1;
  if (i + 1 == s_.size())
    return t_.back();
  auto g = [&](double t) { return s_[i] + integral(i, t) - s; };
  std::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve(g, t_[i], t_[i + 1],
                                             boost::math::tools::eps_tolerance<double>(52), it);
  return 0.5 * (r.first + r.second);
}

} // namespace mmblow
