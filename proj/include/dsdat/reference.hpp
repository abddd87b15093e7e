#pragma once

// Dense desk-scale oracles: the coupled doubling recursion, its decoupled
// closed form, a Hamiltonian sign-function solver, DARE doubling and a dense trace of
// every intermediate of the truncated solver.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dsdat/care_core.hpp"
#include "dsdat/dsda_t.hpp"
#include "dsdat/kernels.hpp"

namespace dsdat {

struct SdaState {
  Matrix A, G, H;
  int k = 0;
};

inline constexpr double kPencilCondLimit = 1e14;

inline SdaState sda_step(const SdaState& s) {
  const Index n = s.A.rows();
  Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(n, n) + s.G * s.H);
  if (!(lu.rcond() > 1.0 / kPencilCondLimit))
    throw Error(ErrorCode::NearSingularPencil, "I + G_k H_k is nearly singular");
  SdaState t;
  const Matrix WA = lu.solve(s.A);  // (I + G H)^{-1} A
  t.A = s.A * WA;
  const Matrix Gn = s.G + s.A * lu.solve(s.G) * s.A.transpose();
  const Matrix Hn = s.H + s.A.transpose() * s.H * WA;
  t.G = 0.5 * (Gn + Gn.transpose());
  t.H = 0.5 * (Hn + Hn.transpose());
  t.k = s.k + 1;
  return t;
}

struct SdaSolution {
  Matrix X, Y;
  std::vector<double> increments;
  std::vector<SdaState> iterates;  ///< filled only when requested
};

inline SdaSolution sda_iterate(SdaState s, double tol, int max_iter, bool keep) {
  SdaSolution out;
  if (keep) out.iterates.push_back(s);
  for (int k = 0; k < max_iter; ++k) {
    SdaState t = sda_step(s);
    const double nh = t.H.norm();
    const double inc = (t.H - s.H).norm();
    out.increments.push_back(nh > 0.0 ? inc / nh : inc);
    s = std::move(t);
    if (keep) out.iterates.push_back(s);
    if (inc <= tol * nh) {
      out.X = s.H;
      out.Y = s.G;
      return out;
    }
  }
  throw Error(ErrorCode::MaxIterations, "doubling did not converge");
}

// Exactly `steps` doubling steps from s; returns all steps + 1 iterates.
inline std::vector<SdaState> sda_run(SdaState s, int steps) {
  std::vector<SdaState> out{s};
  for (int k = 0; k < steps; ++k) out.push_back(sda_step(out.back()));
  return out;
}

inline SdaState sda_seed_state(const CareProblem& p) {
  const ShiftedOperator op(p, p.n() + 1);
  const SdaSeed seed = sda_seed(p, op, p.n());
  return SdaState{seed.A0, seed.G0, seed.H0, 0};
}

inline SdaSolution sda_solve_care(const CareProblem& p, double tol = 1e-14, int max_iter = 60,
                                  bool keep_iterates = false) {
  return sda_iterate(sda_seed_state(p), tol, max_iter, keep_iterates);
}

inline SdaSolution sda_solve_dare(const Matrix& A, const Matrix& G, const Matrix& H,
                                  double tol = 1e-14, int max_iter = 60,
                                  bool keep_iterates = false) {
  return sda_iterate(SdaState{A, G, H, 0}, tol, max_iter, keep_iterates);
}

struct HamiltonianSolution {
  Matrix X;
  double asymmetry = 0.0;      ///< ||X - X^T||_F / ||X||_F before symmetrization
  double min_eigenvalue = 0.0;  ///< of the symmetrized X
};

// Stable invariant subspace of [[A, -G], [-H, -A^T]] from the matrix sign
// function (scaled Newton iteration): the stable subspace is the range of
// I - sign(Ham); an orthonormal basis [W1; W2] of it gives X = W2 W1^{-1}.
inline HamiltonianSolution hamiltonian_care_oracle(const CareProblem& p, int max_iter = 100) {
  const CareProblem q = fold_weight(p);
  const Index n = q.n(), N = 2 * n;
  const Matrix A = q.dense_A();
  Matrix Z(N, N);
  Z << A, -(q.B * q.B.transpose()), -(q.C.transpose() * q.C), -A.transpose();
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::PartialPivLU<Matrix> lu(Z);
    const double logdet = lu.matrixLU().diagonal().array().abs().log().sum();
    if (!std::isfinite(logdet) || !(lu.rcond() > 1e-15))
      throw Error(ErrorCode::ImaginaryAxisEigenvalues,
                  "sign iteration met a singular iterate; eigenvalues on the imaginary axis");
    const double c = std::exp(-logdet / double(N));
    const Matrix Zn = 0.5 * (c * Z + lu.inverse() / c);
    const double change = (Zn - Z).lpNorm<1>();
    Z = Zn;
    if (change <= 1e-14 * Z.lpNorm<1>()) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw Error(ErrorCode::ImaginaryAxisEigenvalues,
                "sign iteration did not converge; eigenvalues near the imaginary axis");
  const Matrix P = Matrix::Identity(N, N) - Z;
  Eigen::ColPivHouseholderQR<Matrix> qr(P);
  qr.setThreshold(1e-8);
  if (qr.rank() != n)
    throw Error(ErrorCode::ImaginaryAxisEigenvalues, "stable subspace does not have dimension n");
  const Matrix W = qr.householderQ() * Matrix::Identity(N, n);
  const Matrix W1 = W.topRows(n), W2 = W.bottomRows(n);
  Eigen::PartialPivLU<Matrix> lu(W1.transpose());
  if (!(lu.rcond() > 1e2 * std::numeric_limits<double>::epsilon()))
    throw Error(ErrorCode::SingularW1, "stable subspace basis has singular upper block");
  const Matrix X = lu.solve(W2.transpose()).transpose();
  HamiltonianSolution out;
  const double xn = X.norm();
  out.asymmetry = xn > 0.0 ? (X - X.transpose()).norm() / xn : 0.0;
  out.X = 0.5 * (X + X.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(out.X, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = n > 0 ? es.eigenvalues()(0) : 0.0;
  return out;
}

// Untruncated decoupled iterates: bases [U_0, ..., U_{2^k - 1}],
// [V_0, ..., V_{2^k - 1}] and the kernels Y_k, T_k.
struct DsdaKernel {
  Matrix Yk, Tk, Ubreve, Vbreve;
  int k = 0;
};

inline constexpr Index kKernelCap = 4096;

inline DsdaKernel dsda_kernel_init(const CareProblem& p, const ShiftedOperator& op) {
  const SdaSeed s = sda_seed(p, op, 0);
  return DsdaKernel{s.Y0, s.T0, s.U0, s.V0, 0};
}

inline DsdaKernel dsda_kernel_step(const DsdaKernel& d, const ShiftedOperator& op,
                                   Index cap = kKernelCap) {
  const Index a = d.Yk.rows(), b = d.Yk.cols();
  if (2 * std::max(a, b) > cap)
    throw Error(ErrorCode::KernelCapExceeded, "untruncated kernel would exceed the cap");
  const std::uint64_t e = std::uint64_t{1} << d.k;
  DsdaKernel t;
  t.k = d.k + 1;
  t.Ubreve.resize(d.Ubreve.rows(), 2 * a);
  t.Ubreve << d.Ubreve, apply_a_tilde_power(op, d.Ubreve, e, false);
  t.Vbreve.resize(d.Vbreve.rows(), 2 * b);
  t.Vbreve << d.Vbreve, apply_a_tilde_power(op, d.Vbreve, e, true);
  t.Yk = Matrix::Zero(2 * a, 2 * b);
  t.Yk.topRightCorner(a, b) = d.Yk;
  t.Yk.bottomLeftCorner(a, b) = d.Yk;
  t.Yk.bottomRightCorner(a, b) = 2.0 * op.gamma() * d.Tk;
  t.Tk = t.Ubreve.transpose() * t.Vbreve;
  return t;
}

inline Matrix matrix_power_2k(Matrix M, int k) {
  for (int i = 0; i < k; ++i) M = M * M;
  return M;
}

struct DenseIterates {
  Matrix A, G, H;
};

inline DenseIterates dsda_evaluate(const DsdaKernel& d, const ShiftedOperator& op) {
  const double g2 = 2.0 * op.gamma();
  const Index a = d.Yk.rows(), b = d.Yk.cols();
  Eigen::LLT<Matrix> eg(Matrix::Identity(a, a) + d.Yk * d.Yk.transpose());
  Eigen::LLT<Matrix> eh(Matrix::Identity(b, b) + d.Yk.transpose() * d.Yk);
  DenseIterates out;
  out.G = g2 * d.Ubreve * eg.solve(d.Ubreve.transpose());
  out.H = g2 * d.Vbreve * eh.solve(d.Vbreve.transpose());
  out.A = matrix_power_2k(dense_a_tilde(op), d.k) -
          g2 * d.Ubreve * eg.solve(d.Yk * d.Vbreve.transpose());
  out.G = 0.5 * (out.G + out.G.transpose());
  out.H = 0.5 * (out.H + out.H.transpose());
  return out;
}

// One step of the dense trace. Subscript conventions: "pre" quantities are
// the doubled iterates before this step's truncation, "trunc" after it.
struct TraceStep {
  int j = 0;
  double eps_g = 0.0, eps_h = 0.0;
  DsdatState state;    ///< solver state after the step
  StepDetail detail;   ///< untruncated side factors of the step
  Matrix MG, MH;       ///< coefficient maps: untruncated bases = basis * M
  Matrix NG, NH;       ///< truncated coefficients Theta_1^T M
  Matrix kernel;       ///< the untruncated kernel in these coordinates
  Matrix A_pre, A_trunc, A_from_K;
  Matrix G_pre, H_pre;              ///< direct 2g basis M E M^T basis^T
  Matrix G_pre_svd, H_pre_svd;      ///< 2g basis Theta Sigma^2 Theta^T basis^T
  Matrix G_trunc, H_trunc;          ///< direct truncated forms
  Matrix LG_direct, LH_direct, LG_rec, LH_rec;
  double sda_step_defect = 0.0;     ///< mismatch against one classic step from the previous trunc
};

struct DenseTrace {
  double gamma = 0.0;
  Matrix At;  ///< dense Cayley operator
  std::vector<TraceStep> steps;
};

namespace detail {

// E(Y) = (I + Y Y^T)^{-1} and E(Y) Y.
inline std::pair<Matrix, Matrix> kernel_forms(const Matrix& Y) {
  Eigen::LLT<Matrix> llt(Matrix::Identity(Y.rows(), Y.rows()) + Y * Y.transpose());
  return {llt.solve(Matrix::Identity(Y.rows(), Y.rows())), llt.solve(Y)};
}

inline Matrix kron_identity2(const Matrix& N) {
  Matrix out = Matrix::Zero(2 * N.rows(), 2 * N.cols());
  out.topLeftCorner(N.rows(), N.cols()) = N;
  out.bottomRightCorner(N.rows(), N.cols()) = N;
  return out;
}

}  // namespace detail

// Runs the truncated solver for k_max steps while materializing every
// intermediate densely. eps_schedule[j-1] is used at step j (last repeats).
inline DenseTrace dense_dsda_t_trace(const CareProblem& p, const std::vector<double>& eps_schedule,
                                     int k_max, const StepOptions& opt = {}) {
  const CareProblem q = fold_weight(p);
  const ShiftedOperator op(q, q.n() + 1);
  DenseTrace tr;
  tr.gamma = q.gamma;
  const double g2 = 2.0 * q.gamma;
  tr.At = dense_a_tilde(op);
  auto eps_at = [&](int j) {
    if (eps_schedule.empty()) return 0.0;
    return eps_schedule[std::min<std::size_t>(std::size_t(j - 1), eps_schedule.size() - 1)];
  };
  Matrix At_pow = tr.At * tr.At;  // At^{2^j} for the current j
  for (int j = 1; j <= k_max; ++j) {
    TraceStep ts;
    ts.j = j;
    ts.eps_g = ts.eps_h = eps_at(j);
    if (j == 1) {
      ts.state = init_j1(q, op, ts.eps_g, ts.eps_h, opt, &ts.detail);
      ts.kernel = ts.detail.kernel;
      ts.MG = ts.detail.G.coef;
      ts.MH = ts.detail.H.coef;
    } else {
      const TraceStep& pv = tr.steps.back();
      ts.state = doubling_truncation_step(pv.state, op, ts.eps_g, ts.eps_h, opt, &ts.detail);
      const Matrix T = pv.NG.transpose() * pv.state.coupling.Omega * pv.NH;
      const Index a = pv.kernel.rows(), b = pv.kernel.cols();
      ts.kernel = Matrix::Zero(2 * a, 2 * b);
      ts.kernel.topRightCorner(a, b) = pv.kernel;
      ts.kernel.bottomLeftCorner(a, b) = pv.kernel;
      ts.kernel.bottomRightCorner(a, b) = g2 * T;
      ts.MG = ts.detail.G.coef * detail::kron_identity2(pv.NG);
      ts.MH = ts.detail.H.coef * detail::kron_identity2(pv.NH);
    }
    const SideDetail& dg = ts.detail.G;
    const SideDetail& dh = ts.detail.H;
    ts.NG = dg.theta.leftCols(dg.r).transpose() * ts.MG;
    ts.NH = dh.theta.leftCols(dh.r).transpose() * ts.MH;

    const auto [EG, EY] = detail::kernel_forms(ts.kernel);
    const Matrix YtY = Matrix::Identity(ts.kernel.cols(), ts.kernel.cols()) +
                       ts.kernel.transpose() * ts.kernel;
    const Matrix EH = YtY.llt().solve(Matrix::Identity(YtY.rows(), YtY.cols()));

    const Matrix& bu = dg.basis;
    const Matrix& bv = dh.basis;
    ts.G_pre = g2 * bu * ts.MG * EG * ts.MG.transpose() * bu.transpose();
    ts.H_pre = g2 * bv * ts.MH * EH * ts.MH.transpose() * bv.transpose();
    ts.G_pre_svd = g2 * bu * dg.theta * dg.sigma.array().square().matrix().asDiagonal() *
                   dg.theta.transpose() * bu.transpose();
    ts.H_pre_svd = g2 * bv * dh.theta * dh.sigma.array().square().matrix().asDiagonal() *
                   dh.theta.transpose() * bv.transpose();
    const Matrix QG = ts.state.G.Q, QH = ts.state.H.Q;
    ts.G_trunc = g2 * QG * ts.NG * EG * ts.NG.transpose() * QG.transpose();
    ts.H_trunc = g2 * QH * ts.NH * EH * ts.NH.transpose() * QH.transpose();
    ts.A_pre = At_pow - g2 * bu * ts.MG * EY * ts.MH.transpose() * bv.transpose();
    ts.A_trunc = At_pow - g2 * QG * ts.NG * EY * ts.NH.transpose() * QH.transpose();
    const CouplingState& c = ts.state.coupling;
    ts.A_from_K = At_pow - g2 * QG * ts.state.G.sigma1.asDiagonal() * c.K *
                               ts.state.H.sigma1.asDiagonal() * QH.transpose();

    const auto [LGr, LHr] = compute_L(ts.state.G, ts.state.H, c);
    ts.LG_rec = LGr;
    ts.LH_rec = LHr;
    // Direct forms: L^G = 2g N_G E(Y) Y N_H^T Omega^T, L^H = 2g N_H E(Y)^T-side analogue.
    const Matrix EYt = YtY.llt().solve(ts.kernel.transpose());  // (I + Y^T Y)^{-1} Y^T
    ts.LG_direct = g2 * ts.NG * EY * ts.NH.transpose() * c.Omega.transpose();
    ts.LH_direct = g2 * ts.NH * EYt * ts.NG.transpose() * c.Omega;

    if (j >= 2) {
      const TraceStep& pv = tr.steps.back();
      const SdaState nx = sda_step(SdaState{pv.A_trunc, pv.state.Gt.dense(), pv.state.Ht.dense(), 0});
      const double sc = std::max({nx.A.norm(), nx.G.norm(), nx.H.norm(), 1e-300});
      ts.sda_step_defect = std::max({(nx.A - ts.A_pre).norm(), (nx.G - ts.G_pre).norm(),
                                     (nx.H - ts.H_pre).norm()}) / sc;
    }
    tr.steps.push_back(std::move(ts));
    At_pow = At_pow * At_pow;
  }
  return tr;
}

}  // namespace dsdat
