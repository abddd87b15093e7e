#pragma once

// Error-theory checks: DARE fixed points, the perturbation bound for DAREs,
// truncation-error bounds of the truncated solver, monotonicity of the
// doubling iterates and the observed convergence order.
//
// Norm convention for the perturbation bound: l, xi and eta are the norms of
// the vectorized operators (Frobenius-induced), so perturbations and the
// resulting error are measured in the Frobenius norm, while the fixed
// coefficient matrices such as (I + G X)^{-1} use the spectral norm. Since
// ||M N||_F <= ||M||_2 ||N||_F this keeps every estimate of the bound valid.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsdat/care_core.hpp"
#include "dsdat/lowrank.hpp"
#include "dsdat/reference.hpp"
#include "dsdat/residual.hpp"

namespace dsdat {

inline double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> s(M);
  return s.singularValues()(0);
}

inline double dare_fixed_point_defect(const Matrix& Ak, const Matrix& Gk, const Matrix& Hk,
                                      const Matrix& X) {
  const Index n = X.rows();
  Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(n, n) + Gk * X);
  if (!(lu.rcond() > std::numeric_limits<double>::epsilon()))
    throw Error(ErrorCode::SingularMatrix, "I + G_k X is singular");
  const Matrix F = Ak.transpose() * X * lu.solve(Ak) + Hk - X;
  const double xn = X.norm();
  return xn > 0.0 ? F.norm() / xn : F.norm();
}

struct PerturbationQuantities {
  double ell = 0.0, xi = 0.0, eta = 0.0;
  Matrix Ac;
};

namespace detail {

// Orthonormal (Frobenius) coordinates on symmetric matrices: diagonal entries
// as they are, off-diagonal pairs scaled by sqrt(2).
inline Vector sym_coords(const Matrix& S) {
  const Index n = S.rows();
  Vector v(n * (n + 1) / 2);
  Index k = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i) v(k++) = (i == j) ? S(i, i) : std::sqrt(2.0) * 0.5 * (S(i, j) + S(j, i));
  return v;
}

inline Matrix sym_from_coords(const Vector& v, Index n) {
  Matrix S(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i) {
      if (i == j) S(i, i) = v(k);
      else S(i, j) = S(j, i) = v(k) / std::sqrt(2.0);
      ++k;
    }
  return S;
}

}  // namespace detail

inline PerturbationQuantities perturbation_quantities(const Matrix& A, const Matrix& G,
                                                      const Matrix& H, const Matrix& X) {
  (void)H;
  const Index n = A.rows();
  if (n > 40) throw Error(ErrorCode::InvalidArgument, "vectorized operators need n <= 40");
  const Matrix I = Matrix::Identity(n, n);
  PerturbationQuantities q;
  q.Ac = (I + G * X).partialPivLu().solve(A);
  Eigen::EigenSolver<Matrix> es(q.Ac, false);
  if (n > 0 && es.eigenvalues().cwiseAbs().maxCoeff() >= 1.0)
    throw Error(ErrorCode::UnstableClosedLoop, "closed-loop matrix is not d-stable");
  const Index N = n * (n + 1) / 2;
  Matrix Lsym(N, N);
  for (Index b = 0; b < N; ++b) {
    const Matrix Phi = detail::sym_from_coords(Vector::Unit(N, b), n);
    Lsym.col(b) = detail::sym_coords(Phi - q.Ac.transpose() * Phi * q.Ac);
  }
  Eigen::JacobiSVD<Matrix> sl(Lsym);
  q.ell = N > 0 ? sl.singularValues()(N - 1) : 0.0;
  const Eigen::PartialPivLU<Matrix> llu(Lsym);
  // M1 = A^T (I + X G)^{-1} X, so the xi map is Phi -> M1 Phi + (M1 Phi)^T
  // and the eta map is Phi -> M1 Phi M1^T.
  const Matrix M1 = A.transpose() * (I + X * G).partialPivLu().solve(X);
  Matrix Mxi(N, n * n);
  for (Index c = 0; c < n * n; ++c) {
    Matrix Phi = Matrix::Zero(n, n);
    Phi(c % n, c / n) = 1.0;
    const Matrix T = M1 * Phi;
    Mxi.col(c) = llu.solve(detail::sym_coords(T + T.transpose()));
  }
  Matrix Meta(N, N);
  for (Index b = 0; b < N; ++b) {
    const Matrix Phi = detail::sym_from_coords(Vector::Unit(N, b), n);
    Meta.col(b) = llu.solve(detail::sym_coords(M1 * Phi * M1.transpose()));
  }
  q.xi = spectral_norm(Mxi);
  q.eta = spectral_norm(Meta);
  return q;
}

struct PerturbationBound {
  double delta = 0.0, alpha = 0.0, g = 0.0, omega = 0.0, zeta = 0.0;
  std::optional<double> theta;
  bool g_tilde_psd = false;
  bool h_tilde_psd = false;
  bool dg_small = false;        ///< ||X (I+GX)^{-1}|| ||dG|| < 1
  bool theta_real = false;      ///< discriminant of the theta formula nonnegative
  bool g_theta_small = false;   ///< g theta < 1
  bool first_inequality = false;
  bool second_inequality = false;

  bool conditions_met() const {
    return g_tilde_psd && h_tilde_psd && dg_small && theta_real && g_theta_small &&
           first_inequality && second_inequality;
  }
  std::string failed_conditions() const {
    std::string s;
    auto add = [&](bool ok, const char* name) {
      if (!ok) s += (s.empty() ? "" : ", ") + std::string(name);
    };
    add(g_tilde_psd, "G~ >= 0");
    add(h_tilde_psd, "H~ >= 0");
    add(dg_small, "||X(I+GX)^-1|| ||dG|| < 1");
    add(theta_real, "theta real");
    add(g_theta_small, "g theta < 1");
    add(first_inequality, "first inequality");
    add(second_inequality, "second inequality");
    return s;
  }
  double require_theta() const {
    if (!conditions_met() || !theta)
      throw Error(ErrorCode::ConditionsViolated, failed_conditions());
    return *theta;
  }
};

inline bool is_psd(const Matrix& S, double rel_tol = 1e-14) {
  if (S.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  return es.eigenvalues()(0) >= -rel_tol * scale;
}

inline PerturbationBound perturbation_bound(const PerturbationQuantities& q, const Matrix& A,
                                            const Matrix& G, const Matrix& H, const Matrix& X,
                                            const Matrix& dA, const Matrix& dG,
                                            const Matrix& dH) {
  const Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  const auto lu = (I + G * X).partialPivLu();
  const Matrix W = lu.inverse();               // (I + G X)^{-1}
  const double nW = spectral_norm(W);
  const double nWA = spectral_norm(W * A);     // ||(I+GX)^{-1} A||
  const double nXW = spectral_norm(X * W);     // ||X (I+GX)^{-1}||
  const double nXWA = spectral_norm(X * W * A);
  const double ndA = dA.norm(), ndG = dG.norm(), ndH = dH.norm();
  const double ell = q.ell;

  PerturbationBound b;
  b.g_tilde_psd = is_psd(G + dG);
  b.h_tilde_psd = is_psd(H + dH);
  const double den = 1.0 - nXW * ndG;
  b.dg_small = den > 0.0;
  if (!b.dg_small) return b;
  b.delta = (ndA + nXWA * ndG) / den;
  b.alpha = nW * (spectral_norm(A) + ndA) / den;
  b.g = nW * (spectral_norm(G) + ndG) / den;
  b.omega = ndH / ell + q.xi * ndA + q.eta * ndG + b.delta * nXW / ell * (ndA + nXWA * ndG);
  b.zeta = b.delta * nW * (2.0 * nWA + b.delta * nW);

  const double lz = ell - b.zeta;
  const double s = lz + ell * b.g * b.omega;
  const double disc = s * s - 4.0 * ell * b.g * b.omega * (lz + b.alpha * b.alpha);
  b.theta_real = disc >= 0.0;
  if (!b.theta_real) return b;
  const double denom = s + std::sqrt(disc);
  b.theta = denom > 0.0 ? 2.0 * ell * b.omega / denom : (b.omega == 0.0 ? 0.0 : INFINITY);
  const double th = *b.theta;
  b.g_theta_small = b.g * th < 1.0;
  if (b.g_theta_small) {
    const double lhs = (b.delta * nW + b.g * th * nWA) / (1.0 - b.g * th);
    b.first_inequality = lhs < ell / (nWA + std::sqrt(ell + nWA * nWA));
  }
  const double t2 = lz + 2.0 * b.alpha;
  const double rhs2_den = ell * b.g * (t2 + std::sqrt(std::max(0.0, t2 * t2 - lz * lz)));
  b.second_inequality = lz > 0.0 && (rhs2_den == 0.0 || b.omega < lz * lz / rhs2_den);
  return b;
}

inline double first_order_bound(const PerturbationQuantities& q, double norm_dA, double norm_dG,
                                double norm_dH) {
  return norm_dH / q.ell + q.xi * norm_dA + q.eta * norm_dG;
}

enum class BoundStatus { Pass, Fail, NotApplicable };

inline const char* to_string(BoundStatus s) {
  switch (s) {
    case BoundStatus::Pass: return "Pass";
    case BoundStatus::Fail: return "Fail";
    case BoundStatus::NotApplicable: return "NotApplicable";
  }
  return "Unknown";
}

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
  BoundStatus status = BoundStatus::Fail;
};

namespace detail {

// The bounds assume the kept singular values are positive and every dropped
// one is at most eps times the largest.
inline bool truncation_premise(const SideDetail& d, double eps) {
  if (d.r == 0 || d.sigma.size() < d.r) return false;
  for (Index i = 0; i < d.r; ++i)
    if (!(d.sigma(i) > 0.0)) return false;
  return d.r >= d.sigma.size() || d.sigma(d.r) <= eps * d.sigma(0);
}

inline BoundCheck finish_check(double lhs, double rhs, double abs_slack, bool premise) {
  BoundCheck c;
  c.lhs = lhs;
  c.rhs = rhs;
  c.ok = lhs <= rhs * (1.0 + 1e-8) + abs_slack;
  c.status = !premise ? BoundStatus::NotApplicable : (c.ok ? BoundStatus::Pass : BoundStatus::Fail);
  return c;
}

inline double roundoff_slack(const Matrix& M) {
  return 1e-13 * std::max(1.0, spectral_norm(M));
}

}  // namespace detail

// ||A_1^{(1)} - A_1|| <= 4 g eps ||Sigma^G_1|| ||Sigma^Y_1|| ||Sigma^H_1||.
inline BoundCheck truncation_bound_check_j1(const DenseTrace& tr, double eps1) {
  if (tr.steps.empty()) throw Error(ErrorCode::TraceMissing, "trace has no first step");
  const TraceStep& t = tr.steps.front();
  if (t.A_pre.size() == 0 || t.kernel.size() == 0)
    throw Error(ErrorCode::TraceMissing, "first-step dense iterates missing");
  const double lhs = spectral_norm(t.A_trunc - t.A_pre);
  const double sy = spectral_norm(t.kernel);
  const double rhs = 4.0 * tr.gamma * eps1 * t.state.G.sigma1(0) * sy * t.state.H.sigma1(0);
  const bool premise = detail::truncation_premise(t.detail.G, eps1) &&
                       detail::truncation_premise(t.detail.H, eps1);
  return detail::finish_check(lhs, rhs, detail::roundoff_slack(t.A_pre), premise);
}

// ||A_{s+1}^{(s+1)} - A_{s+1}^{(s)}|| <= 4 g kappa_s eps ||Sigma^G_{s+1}|| ||Sigma^H_{s+1}||,
// kappa_s = max(1, ||K_s||^2) (2 g ||Sigma^Y_{s+1}|| + sqrt(1 + 4 g^2 ||Sigma^Y_{s+1}||^2)).
inline BoundCheck truncation_bound_check_js(const DenseTrace& tr, int s, double eps) {
  if (s < 1 || static_cast<std::size_t>(s + 1) > tr.steps.size())
    throw Error(ErrorCode::TraceMissing, "trace does not reach step s + 1");
  const TraceStep& ts = tr.steps[std::size_t(s - 1)];
  const TraceStep& tn = tr.steps[std::size_t(s)];
  const double g = tr.gamma;
  const double lhs = spectral_norm(tn.A_trunc - tn.A_pre);
  const double nK = spectral_norm(ts.state.coupling.K);
  const double sy = ts.state.coupling.Sy.size() ? ts.state.coupling.Sy(0) : 0.0;
  const double kappa =
      std::max(1.0, nK * nK) * (2.0 * g * sy + std::sqrt(1.0 + 4.0 * g * g * sy * sy));
  const double rhs = 4.0 * g * kappa * eps * tn.state.G.sigma1(0) * tn.state.H.sigma1(0);
  const bool premise = detail::truncation_premise(tn.detail.G, eps) &&
                       detail::truncation_premise(tn.detail.H, eps);
  return detail::finish_check(lhs, rhs, detail::roundoff_slack(tn.A_pre), premise);
}

struct MonotonicityReport {
  std::vector<double> min_eigenvalues;  ///< lambda_min(H_{k+1} - H_k)
  bool pass = true;
};

inline MonotonicityReport monotonicity_check(const std::vector<Matrix>& iterates,
                                             double tol = 1e-12) {
  MonotonicityReport rep;
  for (std::size_t k = 0; k + 1 < iterates.size(); ++k) {
    const Matrix D = iterates[k + 1] - iterates[k];
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (D + D.transpose()), Eigen::EigenvaluesOnly);
    const double lmin = D.size() ? es.eigenvalues()(0) : 0.0;
    rep.min_eigenvalues.push_back(lmin);
    if (lmin < -tol * std::max(1.0, iterates[k + 1].norm())) rep.pass = false;
  }
  return rep;
}

inline MonotonicityReport monotonicity_check(const std::vector<LowRankGram>& iterates,
                                             double tol = 1e-12) {
  MonotonicityReport rep;
  for (std::size_t k = 0; k + 1 < iterates.size(); ++k) {
    const Matrix D = joint_difference(iterates[k + 1], iterates[k]);
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (D + D.transpose()), Eigen::EigenvaluesOnly);
    const double lmin = D.size() ? es.eigenvalues()(0) : 0.0;
    rep.min_eigenvalues.push_back(lmin);
    if (lmin < -tol * std::max(1.0, frobenius_norm(iterates[k + 1]))) rep.pass = false;
  }
  return rep;
}

// Least-squares slope of log e_{k+1} against log e_k over the leading run of
// strictly decreasing values. Values within `margin` of the floor are taken
// to be floor-limited and end the run.
inline double convergence_order(const std::vector<double>& history, double floor = 1e-14,
                                double margin = 100.0) {
  std::vector<double> e;
  for (double v : history) {
    if (!(v > margin * floor) || (!e.empty() && !(v < e.back()))) break;
    e.push_back(v);
  }
  if (e.size() < 4)
    throw Error(ErrorCode::InsufficientData, "need at least 4 decreasing points above the floor");
  const std::size_t np = e.size() - 1;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < np; ++k) {
    const double x = std::log(e[k]), y = std::log(e[k + 1]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double d = double(np) * sxx - sx * sx;
  if (d == 0.0) throw Error(ErrorCode::InsufficientData, "degenerate history");
  return (double(np) * sxy - sx * sy) / d;
}

}  // namespace dsdat
