#pragma once

#include <map>
#include <utility>

#include "mmblow/common.hpp"

namespace mmblow::detail {

// Truncated bivariate series in (b, a) with grid-function coefficients.
// A monomial b^m a^n has weighted degree m + 2n; terms above deg are dropped.
struct Series {
  using Key = std::pair<int, int>;
  int deg = 0;
  std::map<Key, CVec> c;

  explicit Series(int d) : deg(d) {}

  bool keeps(int m, int n) const { return m >= 0 && n >= 0 && m + 2 * n <= deg; }

  void add(int m, int n, const CVec &v) {
    if (!keeps(m, n))
      return;
    auto it = c.find({m, n});
    if (it == c.end())
      c.emplace(Key{m, n}, v);
    else
      it->second += v;
  }

  CVec get(int m, int n, Eigen::Index size) const {
    auto it = c.find({m, n});
    return it == c.end() ? CVec::Zero(size) : it->second;
  }

  Series &operator+=(const Series &o) {
    for (const auto &[k, v] : o.c)
      add(k.first, k.second, v);
    return *this;
  }

  Series operator*(const Series &o) const {
    Series r(deg);
    for (const auto &[k1, v1] : c)
      for (const auto &[k2, v2] : o.c) {
        const int m = k1.first + k2.first, n = k1.second + k2.second;
        if (r.keeps(m, n))
          r.add(m, n, (v1.array() * v2.array()).matrix());
      }
    return r;
  }

  Series times(const CVec &v) const {
    Series r(deg);
    for (const auto &[k, x] : c)
      r.c.emplace(k, (x.array() * v.array()).matrix());
    return r;
  }

  Series shifted(int dm, int dn) const {
    Series r(deg);
    for (const auto &[k, v] : c)
      r.add(k.first + dm, k.second + dn, v);
    return r;
  }

  Series conj() const {
    Series r(deg);
    for (const auto &[k, v] : c)
      r.c.emplace(k, v.conjugate());
    return r;
  }
};

// (S0 + sig)^e as a binomial series; sig must have no constant term.
inline Series power_series(const RVec &S0, const Series &sig, double e) {
  const int deg = sig.deg;
  const Eigen::Index n = S0.size();
  const CVec inv = S0.cwiseInverse().cast<cplx>();
  Series x(deg);
  for (const auto &[k, v] : sig.c)
    x.c.emplace(k, (v.array() * inv.array()).matrix());
  Series res(deg), term(deg);
  res.c.emplace(Series::Key{0, 0}, CVec::Ones(n));
  term.c.emplace(Series::Key{0, 0}, CVec::Ones(n));
  double coef = 1.0;
  for (int k = 1; k <= deg; ++k) {
    term = term * x;
    if (term.c.empty())
      break;
    coef *= (e - (k - 1)) / k;
    Series t(deg);
    for (const auto &[key, v] : term.c)
      t.c.emplace(key, coef * v);
    res += t;
  }
  const CVec s0e = S0.array().pow(e).matrix().cast<cplx>();
  return res.times(s0e);
}

} // namespace mmblow::detail
