#pragma once

#include <algorithm>

#include "dsdat/care_core.hpp"

namespace dsdat {

// Symmetric psd matrix scale * Q diag(d)^2 Q^T with orthonormal Q.
struct LowRankGram {
  Matrix Q;
  Vector d;
  double scale = 1.0;

  Index rank() const { return d.size(); }
  Index n() const { return Q.rows(); }
  // scale * diag(d)^2 as a vector.
  Vector weights() const { return scale * d.array().square().matrix(); }
  Matrix dense() const { return Q * weights().asDiagonal() * Q.transpose(); }
};

// Small symmetric matrix representing a - b in an orthonormal basis of
// span([a.Q, b.Q]); a - b = Qj * result * Qj^T.
inline Matrix joint_difference(const LowRankGram& a, const LowRankGram& b) {
  const Index ra = a.rank(), rb = b.rank(), n = a.n();
  Matrix M(n, ra + rb);
  M << a.Q, b.Q;
  Eigen::HouseholderQR<Matrix> qr(M);
  const Index k = std::min(n, ra + rb);
  const Matrix R = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  const Matrix Ra = R.leftCols(ra), Rb = R.rightCols(rb);
  return Ra * a.weights().asDiagonal() * Ra.transpose() -
         Rb * b.weights().asDiagonal() * Rb.transpose();
}

inline double frobenius_norm(const LowRankGram& a) { return a.weights().norm(); }

}  // namespace dsdat
