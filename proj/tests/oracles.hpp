#pragma once

// Independent reference computations used by the tests only.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Plain Taylor series, fine for ‖A‖ ≲ 2.
inline Matrix taylor_exp(const Matrix& a, int terms = 40) {
  Matrix sum = Matrix::Identity(a.rows(), a.cols());
  Matrix term = sum;
  for (int k = 1; k < terms; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

/// ∫_0^1 rot(θ t) dθ = [[sin t/t, (cos t - 1)/t], [(1 - cos t)/t, sin t/t]].
inline Matrix ou_transition(double t) {
  Matrix m(2, 2);
  if (t == 0.0) return Matrix::Identity(2, 2);
  m << std::sin(t) / t, (std::cos(t) - 1.0) / t, (1.0 - std::cos(t)) / t, std::sin(t) / t;
  return m;
}

/// ∫_0^t (2 - 2 cos s)/s² ds by its alternating power series.
inline double ou_gramian_scalar(double t) {
  double sum = 0.0;
  double fact = 1.0;  // (2k)!
  for (int k = 1; k <= 30; ++k) {
    fact *= (2.0 * k - 1.0) * (2.0 * k);
    const double term = 2.0 * std::pow(t, 2 * k - 1) / (fact * (2.0 * k - 1.0));
    sum += (k % 2 == 1 ? term : -term);
  }
  return sum;
}

/// Controllability Gramian ∫_0^t e^{As} B B^T e^{A^T s} ds by Van Loan's block exponential.
inline Matrix van_loan_gramian(const Matrix& a, const Matrix& b, double t) {
  const Eigen::Index d = a.rows();
  Matrix big = Matrix::Zero(2 * d, 2 * d);
  big.topLeftCorner(d, d) = -a;
  big.topRightCorner(d, d) = b * b.transpose();
  big.bottomRightCorner(d, d) = a.transpose();
  const Matrix e = (big * t).exp();
  return e.bottomRightCorner(d, d).transpose() * e.topRightCorner(d, d);
}

/// Classical scalar Brownian bridge x0 → xf on [0,1]: integrating-factor
/// recursion Y_{j+1} = Y_j + dW_j/(1 - t_j), x_j = x0 + t_j(xf - x0) + √ε(1 - t_j) Y_j.
inline std::vector<double> brownian_bridge(double x0, double xf, double eps, const std::vector<double>& dw) {
  const std::size_t n = dw.size();
  std::vector<double> x(n + 1);
  double y = 0.0;
  for (std::size_t j = 0; j <= n; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(n);
    x[j] = x0 + t * (xf - x0) + std::sqrt(eps) * (1.0 - t) * y;
    if (j < n) y += dw[j] / (1.0 - t);
  }
  return x;
}

/// E(x_f | x(t) = s) for x(t) = Y x0 + Z x_f + N with independent x0 ~ N(m0, S0),
/// x_f ~ N(mf, Sf) and N ~ N(0, eps G): textbook block conditioning.
inline Vector joint_gaussian_conditional(const Matrix& y, const Matrix& z, const Matrix& g, double eps,
                                         const Vector& m0, const Matrix& s0, const Vector& mf, const Matrix& sf,
                                         const Vector& s) {
  const Matrix sxx = y * s0 * y.transpose() + z * sf * z.transpose() + eps * g;
  const Matrix sfx = sf * z.transpose();
  const Vector mx = y * m0 + z * mf;
  if (sxx.cwiseAbs().maxCoeff() == 0.0) return mf;
  return mf + sfx * sxx.completeOrthogonalDecomposition().solve(s - mx);
}

}  // namespace oracle
