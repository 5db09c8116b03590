#pragma once

#include <vector>

namespace mmblow::fd {

// Fornberg weights: w[k][j] is the weight of x[j] in the k-th derivative at z.
std::vector<std::vector<double>> fornberg(double z, const std::vector<double> &x,
                                          int m);

// Derivative of order k at z from samples (x, f) using every node.
double derivative(double z, const std::vector<double> &x,
                  const std::vector<double> &f, int k);

// Least-squares line y = a + b x; returns {a, b, r2}.
struct LineFit {
  double intercept = 0, slope = 0, r2 = 0;
};
LineFit fit_line(const std::vector<double> &x, const std::vector<double> &y);

} // namespace mmblow::fd
