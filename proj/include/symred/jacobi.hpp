#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace symred {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns match `values`
};

// Cyclic Jacobi rotations for a real symmetric matrix. Converges when the
// off-diagonal Frobenius norm drops below `tol` times the matrix norm.
inline SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, double tol = 1e-12,
                                   int max_sweeps = 100) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw std::invalid_argument("jacobi_eigen: matrix is not square");

  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_norm() > tol * scale * 10.0)
    throw std::runtime_error("jacobi_eigen: no convergence");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

  SymmetricEigen out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

// Eigenvalues of a complex Hermitian matrix through its real 2n x 2n
// embedding [[Re, -Im], [Im, Re]]; every eigenvalue appears twice there.
inline Eigen::VectorXd hermitian_eigenvalues(const Eigen::MatrixXcd& h, double tol = 1e-12) {
  const Eigen::Index n = h.rows();
  Eigen::MatrixXd real(2 * n, 2 * n);
  real.topLeftCorner(n, n) = h.real();
  real.topRightCorner(n, n) = -h.imag();
  real.bottomLeftCorner(n, n) = h.imag();
  real.bottomRightCorner(n, n) = h.real();
  const auto eig = jacobi_eigen(real, tol);
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k)
    out(k) = 0.5 * (eig.values(2 * k) + eig.values(2 * k + 1));
  return out;  // ascending
}

}  // namespace symred
