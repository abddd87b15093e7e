#pragma once

// Dense factorization primitives: rank-revealing QR, block Gram-Schmidt
// extension, sign-normalized SVD and the relative-threshold truncation split.

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dsdat/care_core.hpp"

namespace dsdat {

struct PivotedQr {
  Matrix Q;  // n x p, orthonormal columns
  Matrix R;  // p x k, upper trapezoidal
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P;  // M P = Q R
  Index rank = 0;

  // Coefficients C with M = Q C (that is, R P^T).
  Matrix coefficients() const { return R * P.transpose(); }
};

inline PivotedQr qr_col_pivot(const Eigen::Ref<const Matrix>& M,
                              double unit = std::numeric_limits<double>::epsilon()) {
  PivotedQr out;
  const Index n = M.rows(), k = M.cols();
  Eigen::ColPivHouseholderQR<Matrix> qr(M);
  out.P = qr.colsPermutation();
  const Matrix& packed = qr.matrixQR();
  const Index d = std::min(n, k);
  const double r11 = d > 0 ? std::abs(packed(0, 0)) : 0.0;
  Index p = 0;
  while (p < d && r11 > 0.0 && std::abs(packed(p, p)) > unit * double(k) * r11) ++p;
  out.rank = p;
  out.Q = qr.householderQ() * Matrix::Identity(n, p);
  out.R = packed.topRows(p).template triangularView<Eigen::Upper>();
  return out;
}

struct BasisExtension {
  Matrix Q_new;  // n x (p - r)
  Matrix R12;    // r x k
  Matrix R2;     // (p - r) x k
};

// Orthogonalizes the columns of W against Q_prev and each other with two
// passes of modified Gram-Schmidt, so that
//   [Q_prev, W] = [Q_prev, Q_new] [[I, R12], [0, R2]].
// A column whose residual falls below drop_tol times its original norm is
// treated as lying in the current span and contributes no new direction.
inline BasisExtension extend_basis(const Eigen::Ref<const Matrix>& Q_prev,
                                   const Eigen::Ref<const Matrix>& W, double drop_tol = 1e-13,
                                   bool reorthogonalize = true) {
  const Index n = W.rows(), r = Q_prev.cols(), k = W.cols();
  if (Q_prev.rows() != n) throw Error(ErrorCode::DimensionMismatch, "basis row mismatch");
  BasisExtension ext;
  ext.R12 = Matrix::Zero(r, k);
  Matrix Qn(n, k);
  Matrix Rn = Matrix::Zero(k, k);
  Index p = 0;
  const int passes = reorthogonalize ? 2 : 1;
  for (Index c = 0; c < k; ++c) {
    Vector w = W.col(c);
    const double w0 = w.norm();
    Vector coef_prev = Vector::Zero(r);
    Vector coef_new = Vector::Zero(p);
    for (int pass = 0; pass < passes; ++pass) {
      for (Index i = 0; i < r; ++i) {
        const double h = Q_prev.col(i).dot(w);
        coef_prev(i) += h;
        w -= h * Q_prev.col(i);
      }
      for (Index i = 0; i < p; ++i) {
        const double h = Qn.col(i).dot(w);
        coef_new(i) += h;
        w -= h * Qn.col(i);
      }
    }
    ext.R12.col(c) = coef_prev;
    Rn.col(c).head(p) = coef_new;
    const double nrm = w.norm();
    if (nrm > drop_tol * w0 && nrm > 0.0 && p < n - r) {
      Qn.col(p) = w / nrm;
      Rn(p, c) = nrm;
      ++p;
    }
  }
  ext.Q_new = Qn.leftCols(p);
  ext.R2 = Rn.topRows(p);
  return ext;
}

struct SvdFactors {
  Matrix U;
  Vector S;
  Matrix V;
};

// SVD with the largest-magnitude entry of every left singular vector made
// positive (ties broken by lowest index); the matching right vector flips too.
inline SvdFactors svd(const Eigen::Ref<const Matrix>& M, bool thin = true) {
  SvdFactors f;
  const Index a = M.rows(), b = M.cols();
  if (!M.allFinite()) throw Error(ErrorCode::ConvergenceFailure, "SVD input is not finite");
  if (a == 0 || b == 0) {
    f.U = thin ? Matrix(a, 0) : Matrix(Matrix::Identity(a, a));
    f.V = thin ? Matrix(b, 0) : Matrix(Matrix::Identity(b, b));
    f.S = Vector(0);
    return f;
  }
  const unsigned opts = thin ? (Eigen::ComputeThinU | Eigen::ComputeThinV)
                             : (Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::BDCSVD<Matrix> s(M, opts);
  if (s.info() != Eigen::Success) throw Error(ErrorCode::ConvergenceFailure, "SVD failed");
  f.U = s.matrixU();
  f.S = s.singularValues();
  f.V = s.matrixV();
  for (Index j = 0; j < f.U.cols(); ++j) {
    Index imax = 0;
    double vmax = -1.0;
    for (Index i = 0; i < a; ++i) {
      const double v = std::abs(f.U(i, j));
      if (v > vmax) {
        vmax = v;
        imax = i;
      }
    }
    if (f.U(imax, j) < 0.0) {
      f.U.col(j) = -f.U.col(j);
      if (j < f.V.cols()) f.V.col(j) = -f.V.col(j);
    }
  }
  return f;
}

struct TruncationSplit {
  Index r = 0;
  double dropped_norm = 0.0;
};

inline TruncationSplit truncation_split(const Eigen::Ref<const Vector>& S, double eps) {
  TruncationSplit t;
  const Index len = S.size();
  if (len == 0 || !(S(0) > 0.0)) return t;
  const double cut = eps * S(0);
  Index r = 0;
  while (r < len && S(r) > cut) ++r;
  t.r = std::max<Index>(r, 1);
  t.dropped_norm = t.r < len ? S(t.r) : 0.0;
  return t;
}

}  // namespace dsdat
