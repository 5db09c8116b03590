#include "mmblow/fd.hpp"

#include <cmath>
#include <stdexcept>

namespace mmblow::fd {

std::vector<std::vector<double>> fornberg(double z, const std::vector<double> &x,
                                          int m) {
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> c(m + 1, std::vector<double>(n, 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k)
        c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

double derivative(double z, const std::vector<double> &x,
                  const std::vector<double> &f, int k) {
  auto w = fornberg(z, x, k);
  double s = 0;
  for (size_t j = 0; j < x.size(); ++j)
    s += w[k][j] * f[j];
  return s;
}

LineFit fit_line(const std::vector<double> &x, const std::vector<double> &y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n)
    throw std::invalid_argument("fit_line: need at least two points");
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

} // namespace mmblow::fd
