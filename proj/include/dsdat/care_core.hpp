#pragma once

// Problem model for A^T X + X A - X G X + H = 0 with G = B R^{-1} B^T and
// H = C^T C, plus the shifted operator (A - gamma I) every solver applies.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "dsdat/error.hpp"

namespace dsdat {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr Index kDefaultDenseThreshold = 500;

struct CareProblem {
  SparseMatrix A;  // n x n
  Matrix B;        // n x m
  Matrix C;        // l x n
  Matrix R;        // m x m, identity when empty
  double gamma = 1e-6;

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
  Index l() const { return C.rows(); }

  Matrix dense_A() const { return Matrix(A); }
  Matrix weight() const { return R.size() == 0 ? Matrix::Identity(m(), m()) : R; }
  // G = B R^{-1} B^T (dense, desk scale only).
  Matrix dense_G() const {
    Eigen::LLT<Matrix> llt(weight());
    return B * llt.solve(B.transpose());
  }
  Matrix dense_H() const { return C.transpose() * C; }

  static CareProblem from_dense(const Matrix& A, const Matrix& B, const Matrix& C,
                                double gamma = 1e-6) {
    CareProblem p;
    p.A = A.sparseView(0.0, 0.0);
    p.A.makeCompressed();
    p.B = B;
    p.C = C;
    p.R = Matrix::Identity(B.cols(), B.cols());
    p.gamma = gamma;
    return p;
  }
};

inline void check_dimensions(const CareProblem& p) {
  if (p.A.rows() != p.A.cols())
    throw Error(ErrorCode::DimensionMismatch, "A must be square");
  if (p.B.rows() != p.n())
    throw Error(ErrorCode::DimensionMismatch, "B must have n rows");
  if (p.C.cols() != p.n())
    throw Error(ErrorCode::DimensionMismatch, "C must have n columns");
  if (p.R.size() != 0 && (p.R.rows() != p.m() || p.R.cols() != p.m()))
    throw Error(ErrorCode::DimensionMismatch, "R must be m x m");
  if (!(p.gamma > 0.0))
    throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
}

struct ValidationReport {
  Index rank_B = 0;
  Index rank_Ct = 0;
  double weight_symmetry_defect = 0.0;
  double weight_min_eigenvalue = 0.0;
  std::vector<std::string> warnings;
};

inline Index numerical_rank(const Matrix& M) {
  if (M.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(M);
  qr.setThreshold(std::numeric_limits<double>::epsilon() * double(std::max(M.rows(), M.cols())));
  return qr.rank();
}

inline ValidationReport validate_problem(const CareProblem& p) {
  check_dimensions(p);
  ValidationReport rep;
  rep.rank_B = numerical_rank(p.B);
  rep.rank_Ct = numerical_rank(p.C.transpose());
  if (p.m() < 1 || rep.rank_B < p.m())
    throw Error(ErrorCode::RankDeficientB, "B has rank " + std::to_string(rep.rank_B) +
                                               " < m = " + std::to_string(p.m()));
  if (p.l() < 1 || rep.rank_Ct < p.l())
    throw Error(ErrorCode::RankDeficientC, "C^T has rank " + std::to_string(rep.rank_Ct) +
                                               " < l = " + std::to_string(p.l()));
  const Matrix R = p.weight();
  rep.weight_symmetry_defect = (R - R.transpose()).norm() / std::max(R.norm(), 1e-300);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (R + R.transpose()), Eigen::EigenvaluesOnly);
  rep.weight_min_eigenvalue = es.eigenvalues()(0);
  Eigen::LLT<Matrix> llt(R);
  if (rep.weight_symmetry_defect > 1e-12 || llt.info() != Eigen::Success ||
      rep.weight_min_eigenvalue <= 0.0)
    throw Error(ErrorCode::WeightNotSPD, "R is not symmetric positive definite");
  if (p.m() + p.l() > p.n() / 2)
    rep.warnings.push_back("m + l exceeds n/2; low-rank structure is unlikely to pay off");
  return rep;
}

// Returns an equivalent problem with R = I: B <- B L^{-T} where R = L L^T.
inline CareProblem fold_weight(const CareProblem& p) {
  CareProblem q = p;
  if (p.R.size() == 0) {
    q.R = Matrix::Identity(p.m(), p.m());
    return q;
  }
  Eigen::LLT<Matrix> llt(p.R);
  if (llt.info() != Eigen::Success || (p.R - p.R.transpose()).norm() > 1e-12 * p.R.norm())
    throw Error(ErrorCode::WeightNotSPD, "R is not symmetric positive definite");
  const Matrix L = llt.matrixL();
  // B L^{-T} = (L^{-1} B^T)^T
  q.B = L.triangularView<Eigen::Lower>().solve(p.B.transpose()).transpose();
  q.R = Matrix::Identity(p.m(), p.m());
  return q;
}

// Factorization of A_gamma = A - gamma I, reused for all applications of
// the Cayley operator I + 2 gamma A_gamma^{-1} and its transpose.
class ShiftedOperator {
 public:
  ShiftedOperator(const CareProblem& p, Index dense_threshold = kDefaultDenseThreshold)
      : gamma_(p.gamma), n_(p.n()), impl_(std::make_unique<Impl>()) {
    if (p.A.rows() != p.A.cols())
      throw Error(ErrorCode::DimensionMismatch, "A must be square");
    SparseMatrix I(n_, n_);
    I.setIdentity();
    SparseMatrix Ag = p.A - gamma_ * I;
    Ag.makeCompressed();
    impl_->dense = n_ < dense_threshold;
    if (impl_->dense) {
      const Matrix Agd(Ag);
      impl_->lu.compute(Agd);
      const double rc = impl_->lu.rcond();
      if (!(rc > 1e2 * std::numeric_limits<double>::epsilon()))
        throw Error(ErrorCode::SingularShift,
                    "A - gamma I is singular or nearly so; choose a different gamma");
    } else {
      impl_->slu.analyzePattern(Ag);
      impl_->slu.factorize(Ag);
      if (impl_->slu.info() != Eigen::Success)
        throw Error(ErrorCode::SingularShift,
                    "sparse LU of A - gamma I failed; choose a different gamma");
    }
  }

  ShiftedOperator(const ShiftedOperator&) = delete;
  ShiftedOperator& operator=(const ShiftedOperator&) = delete;
  ShiftedOperator(ShiftedOperator&&) noexcept = default;
  ShiftedOperator& operator=(ShiftedOperator&&) noexcept = default;

  double gamma() const { return gamma_; }
  Index n() const { return n_; }
  bool is_dense() const { return impl_->dense; }
  std::uint64_t solve_count() const { return impl_->solves.load(std::memory_order_relaxed); }

  // A_gamma^{-1} X, or A_gamma^{-T} X when transpose is set.
  Matrix solve(const Eigen::Ref<const Matrix>& X, bool transpose = false) const {
    if (X.rows() != n_) throw Error(ErrorCode::DimensionMismatch, "block has wrong row count");
    impl_->solves.fetch_add(static_cast<std::uint64_t>(X.cols()), std::memory_order_relaxed);
    if (X.cols() == 0) return Matrix(n_, 0);
    Matrix Y;
    if (impl_->dense)
      Y = transpose ? Matrix(impl_->lu.transpose().solve(X)) : Matrix(impl_->lu.solve(X));
    else
      Y = transpose ? Matrix(impl_->slu.transpose().solve(X)) : Matrix(impl_->slu.solve(X));
    return Y;
  }

  // Dense A_gamma^{-1} (desk scale only; not counted as solves).
  Matrix dense_inverse() const {
    Matrix I = Matrix::Identity(n_, n_);
    if (impl_->dense) return impl_->lu.solve(I);
    return impl_->slu.solve(I);
  }

 private:
  struct Impl {
    bool dense = true;
    Eigen::PartialPivLU<Matrix> lu;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> slu;
    std::atomic<std::uint64_t> solves{0};
  };
  double gamma_;
  Index n_;
  std::unique_ptr<Impl> impl_;
};

// X + 2 gamma A_gamma^{-1} X (or the transpose analogue): one solve per column.
inline Matrix apply_a_tilde(const ShiftedOperator& op, const Eigen::Ref<const Matrix>& X,
                            bool transpose = false) {
  if (X.rows() != op.n()) throw Error(ErrorCode::DimensionMismatch, "block has wrong row count");
  return X + 2.0 * op.gamma() * op.solve(X, transpose);
}

// e successive applications of apply_a_tilde; e must be a power of two.
inline Matrix apply_a_tilde_power(const ShiftedOperator& op, const Eigen::Ref<const Matrix>& X,
                                  std::uint64_t e, bool transpose = false) {
  if (e == 0 || (e & (e - 1)) != 0)
    throw Error(ErrorCode::InvalidArgument, "exponent must be a power of two");
  Matrix Y = X;
  for (std::uint64_t i = 0; i < e; ++i) Y = apply_a_tilde(op, Y, transpose);
  return Y;
}

// Dense Cayley operator I + 2 gamma A_gamma^{-1} (desk scale only).
inline Matrix dense_a_tilde(const ShiftedOperator& op) {
  return Matrix::Identity(op.n(), op.n()) + 2.0 * op.gamma() * op.dense_inverse();
}

struct SdaSeed {
  Matrix U0, V0, Y0, T0;
  bool has_dense = false;
  Matrix A0, G0, H0;
  Matrix K_gamma;
};

inline SdaSeed sda_seed(const CareProblem& p, const ShiftedOperator& op,
                        Index dense_threshold = kDefaultDenseThreshold) {
  const CareProblem q = fold_weight(p);
  SdaSeed s;
  s.U0 = op.solve(q.B);
  s.V0 = op.solve(q.C.transpose(), true);
  s.Y0 = q.B.transpose() * s.V0;
  s.T0 = s.U0.transpose() * s.V0;
  if (q.n() > dense_threshold) return s;

  const double g = q.gamma;
  const Index n = q.n();
  const Matrix Agi = op.dense_inverse();
  const Matrix G = q.B * q.B.transpose();
  const Matrix H = q.C.transpose() * q.C;
  const Matrix Ag = q.dense_A() - g * Matrix::Identity(n, n);
  s.K_gamma = Ag.transpose() + H * Agi * G;
  Eigen::PartialPivLU<Matrix> klu(s.K_gamma);
  if (!(klu.rcond() > 1e2 * std::numeric_limits<double>::epsilon()))
    throw Error(ErrorCode::SingularKGamma,
                "A_gamma^T + H A_gamma^{-1} G is singular; choose a different gamma");
  const Matrix Kinv = klu.inverse();
  s.A0 = Matrix::Identity(n, n) + 2.0 * g * Kinv.transpose();
  Matrix G0 = 2.0 * g * Agi * G * Kinv;
  Matrix H0 = 2.0 * g * Kinv * H * Agi;
  s.G0 = 0.5 * (G0 + G0.transpose());
  s.H0 = 0.5 * (H0 + H0.transpose());
  s.has_dense = true;
  return s;
}

}  // namespace dsdat
