#pragma once

// Normalized CARE residuals
//   rho = ||A^T X + X A - X G X + H||_F / (2||A^T X||_F + ||X G X||_F + ||H||_F)
// evaluated without forming n x n matrices when X is factored.

#include <Eigen/Dense>

#include "dsdat/care_core.hpp"
#include "dsdat/lowrank.hpp"

namespace dsdat {

enum class ResidualMethod { LowRank, Dense };

struct ResidualReport {
  double rho = 0.0;
  double num = 0.0;
  double den = 0.0;
  ResidualMethod method = ResidualMethod::LowRank;
};

namespace detail {

// Residual of  M^T X + X M - X (E E^T) X + F F^T  for X = Q D Q^T, where
// AtQ = M^T Q. The residual equals Fm S Fm^T with Fm = [Q, AtQ, F] and
// S = [[-D P D, D, 0], [D, 0, 0], [0, 0, I]], P = (Q^T E)(E^T Q).
// Its Frobenius norm is taken from the thin QR Fm = Qf Rf as ||Rf S Rf^T||_F,
// which keeps full working accuracy even when the residual is tiny.
inline ResidualReport factored_residual(const Matrix& Q, const Vector& D, const Matrix& AtQ,
                                        const Matrix& E, const Matrix& F) {
  const Index n = Q.rows(), r = Q.cols(), c = F.cols();
  const Matrix QtE = Q.transpose() * E;
  const Matrix P = QtE * QtE.transpose();
  const Matrix DPD = D.asDiagonal() * P * D.asDiagonal();
  const Index k = 2 * r + c;
  Matrix S = Matrix::Zero(k, k);
  S.topLeftCorner(r, r) = -DPD;
  S.block(0, r, r, r) = D.asDiagonal();
  S.block(r, 0, r, r) = D.asDiagonal();
  S.bottomRightCorner(c, c).setIdentity();
  Matrix Fm(n, k);
  Fm << Q, AtQ, F;
  Eigen::HouseholderQR<Matrix> qr(Fm);
  const Index kr = std::min(n, k);
  const Matrix Rf = qr.matrixQR().topRows(kr).template triangularView<Eigen::Upper>();
  ResidualReport rep;
  rep.num = (Rf * S * Rf.transpose()).norm();
  rep.den = 2.0 * (AtQ * D.asDiagonal()).norm() + DPD.norm() + (F.transpose() * F).norm();
  rep.rho = rep.den > 0.0 ? rep.num / rep.den : 0.0;
  return rep;
}

}  // namespace detail

inline ResidualReport residual_lowrank(const CareProblem& p, const LowRankGram& X) {
  const CareProblem q = fold_weight(p);
  const Matrix AtQ = q.A.transpose() * X.Q;
  return detail::factored_residual(X.Q, X.weights(), AtQ, q.B, q.C.transpose());
}

// Dual equation A Y + Y A^T - Y C^T C Y + B B^T = 0.
inline ResidualReport residual_dual_lowrank(const CareProblem& p, const LowRankGram& Y) {
  const CareProblem q = fold_weight(p);
  const Matrix AQ = q.A * Y.Q;
  return detail::factored_residual(Y.Q, Y.weights(), AQ, q.C.transpose(), q.B);
}

inline ResidualReport residual_dense(const CareProblem& p, const Matrix& X) {
  const CareProblem q = fold_weight(p);
  const Matrix A = q.dense_A();
  const Matrix G = q.B * q.B.transpose();
  const Matrix H = q.C.transpose() * q.C;
  const Matrix AtX = A.transpose() * X;
  const Matrix XGX = X * G * X;
  ResidualReport rep;
  rep.method = ResidualMethod::Dense;
  rep.num = (AtX + AtX.transpose() - XGX + H).norm();
  rep.den = 2.0 * AtX.norm() + XGX.norm() + H.norm();
  rep.rho = rep.den > 0.0 ? rep.num / rep.den : 0.0;
  return rep;
}

inline ResidualReport residual_dual_dense(const CareProblem& p, const Matrix& Y) {
  const CareProblem q = fold_weight(p);
  const Matrix A = q.dense_A();
  const Matrix G = q.B * q.B.transpose();
  const Matrix H = q.C.transpose() * q.C;
  const Matrix AY = A * Y;
  const Matrix YHY = Y * H * Y;
  ResidualReport rep;
  rep.method = ResidualMethod::Dense;
  rep.num = (AY + AY.transpose() - YHY + G).norm();
  rep.den = 2.0 * AY.norm() + YHY.norm() + G.norm();
  rep.rho = rep.den > 0.0 ? rep.num / rep.den : 0.0;
  return rep;
}

}  // namespace dsdat
