#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace tapermode {

struct SymmetricEigenResult {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column k belongs to values(k)
  int sweeps = 0;
};

// Cyclic Jacobi rotations for small dense symmetric matrices. Eigenvectors
// come out orthonormal to round-off regardless of degeneracies.
inline SymmetricEigenResult symmetric_eigen(const Eigen::MatrixXd& input, int max_sweeps = 100) {
  if (input.rows() != input.cols()) throw std::invalid_argument("symmetric_eigen: matrix not square");
  const Eigen::Index n = input.rows();
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  const double scale = a.norm();
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-32 * scale * scale || off == 0.0) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from cot(2 theta) = (a_qq - a_pp) / (2 a_pq).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  SymmetricEigenResult out;
  out.sweeps = sweep;
  out.values = a.diagonal();
  out.vectors = v;
  // Insertion sort keeps columns paired with their values.
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index j = i; j > 0 && out.values(j - 1) > out.values(j); --j) {
      std::swap(out.values(j - 1), out.values(j));
      out.vectors.col(j - 1).swap(out.vectors.col(j));
    }
  }
  return out;
}

}  // namespace tapermode
