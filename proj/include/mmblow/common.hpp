#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mmblow {

using cplx = std::complex<double>;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using CSpMat = Eigen::SparseMatrix<cplx>;

inline constexpr cplx I{0.0, 1.0};

// Bad input or unsatisfiable configuration; maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A solver failed to converge or a numerical certificate was violated.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
  if (!cond)
    throw ConfigError(msg);
}

} // namespace mmblow
