#pragma once

// Truncated decoupled doubling for large-scale CAREs.
//
// After step j the iterates are held in factored form
//   G_j = 2 gamma QG diag(sG)^2 QG^T,   H_j = 2 gamma QH diag(sH)^2 QH^T,
// and the doubled closed-loop operator is represented implicitly as
//   A_j = At^{2^j} - 2 gamma QG diag(sG) K diag(sH) QH^T
// with At = I + 2 gamma (A - gamma I)^{-1} and a small coupling kernel K.
// Each step extends both bases by At^{2^j} (At^T^{2^j} on the H side) applied
// to the current basis, compresses with two small SVDs, truncates, and advances K
// without ever forming the exponentially growing kernel of the untruncated
// recursion.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dsdat/care_core.hpp"
#include "dsdat/kernels.hpp"
#include "dsdat/lowrank.hpp"
#include "dsdat/residual.hpp"

namespace dsdat {

/// Per-side truncation carry-over (G side uses the U basis, H side the V basis).
struct SideState {
  Matrix Q;       ///< n x r orthonormal basis
  Vector sigma1;  ///< kept singular values, positive and nonincreasing
  Matrix phi1;    ///< right singular vectors belonging to sigma1
  Index r() const { return sigma1.size(); }
};

/// Coupling between the two sides at step j.
struct CouplingState {
  Matrix K;      ///< rG x rH kernel; the H-side kernel is its transpose
  Matrix Uy;     ///< rG x rG left factor of diag(sG) Omega diag(sH)
  Vector Sy;     ///< singular values of diag(sG) Omega diag(sH)
  Matrix Vy;     ///< rH x rH right factor
  Matrix Omega;  ///< QG^T QH
  int j = 0;
  double gamma = 0.0;
};

/// Knobs of the dense kernels used inside a step.
struct StepOptions {
  double qr_rank_unit = std::numeric_limits<double>::epsilon();
  double basis_drop_tol = 1e-13;
  bool reorthogonalize = true;
};

/// Untruncated factors of one side, kept only when a caller asks for them
/// (the dense trace uses them to check the algebra of the step).
struct SideDetail {
  Matrix basis;  ///< orthonormal basis the side matrix is expressed in
  Matrix coef;   ///< coefficient block mapping the previous factors into basis
  Matrix theta;  ///< left singular vectors (all of them)
  Vector sigma;  ///< all singular values before truncation
  Matrix phi;    ///< right singular vectors (all of them)
  Index r = 0;
};

struct StepDetail {
  SideDetail G, H;
  Matrix kernel;  ///< the small 2m x 2l kernel of the first step (empty later)
};

struct DsdatState {
  SideState G, H;
  CouplingState coupling;
  LowRankGram Gt, Ht;
  int j() const { return coupling.j; }
};

namespace detail {

inline Matrix rect_diag(const Vector& s, Index rows, Index cols) {
  Matrix M = Matrix::Zero(rows, cols);
  for (Index i = 0; i < s.size() && i < rows && i < cols; ++i) M(i, i) = s(i);
  return M;
}

// 1 + c * s_i^2 on the leading entries, 1 elsewhere.
inline Vector upsilon(const Vector& s, Index len, double c) {
  Vector u = Vector::Ones(len);
  for (Index i = 0; i < s.size() && i < len; ++i) u(i) += c * s(i) * s(i);
  return u;
}

inline void require_finite(const Matrix& M, const char* what) {
  if (!M.allFinite())
    throw Error(ErrorCode::NearSingularPencil, std::string("non-finite values in ") + what);
}

inline CouplingState make_coupling(const SideState& G, const SideState& H, Matrix K, int j,
                                   double gamma) {
  CouplingState c;
  c.K = std::move(K);
  c.Omega = G.Q.transpose() * H.Q;
  const Matrix core = G.sigma1.asDiagonal() * c.Omega * H.sigma1.asDiagonal();
  SvdFactors f = svd(core, false);
  c.Uy = std::move(f.U);
  c.Sy = std::move(f.S);
  c.Vy = std::move(f.V);
  c.j = j;
  c.gamma = gamma;
  return c;
}

inline SideState truncate_side(const Matrix& basis, const SvdFactors& f, double eps,
                               const char* side) {
  const TruncationSplit t = truncation_split(f.S, eps);
  if (t.r == 0)
    throw Error(ErrorCode::KernelDegenerate, std::string(side) + " factor vanished");
  SideState s;
  s.Q = basis * f.U.leftCols(t.r);
  s.sigma1 = f.S.head(t.r);
  s.phi1 = f.V.leftCols(t.r);
  return s;
}

inline LowRankGram gram_of(const SideState& s, double gamma) {
  return LowRankGram{s.Q, s.sigma1, 2.0 * gamma};
}

inline SideDetail side_detail(const Matrix& basis, const Matrix& coef, const SvdFactors& f,
                              Index r) {
  return SideDetail{basis, coef, f.U, f.S, f.V, r};
}

}  // namespace detail

/// K_1 = phiG^T Sy1 phiH, with Sy1 the rectangular singular-value factor of
/// the first-step kernel.
inline Matrix compute_K1(const Matrix& phiG, const Matrix& Sy1, const Matrix& phiH) {
  if (phiG.rows() != Sy1.rows() || phiH.rows() != Sy1.cols())
    throw Error(ErrorCode::DimensionMismatch, "K1 factor shapes disagree");
  return phiG.transpose() * Sy1 * phiH;
}

/// The pair (L^G, L^H) = (2 gamma SG K SH Omega^T, 2 gamma SH K^T SG Omega).
inline std::pair<Matrix, Matrix> compute_L(const SideState& G, const SideState& H,
                                           const CouplingState& c) {
  if (c.K.rows() != G.r() || c.K.cols() != H.r() || c.Omega.rows() != G.r() ||
      c.Omega.cols() != H.r())
    throw Error(ErrorCode::DimensionMismatch, "coupling shapes disagree with side ranks");
  const double g2 = 2.0 * c.gamma;
  Matrix LG = g2 * G.sigma1.asDiagonal() * c.K * H.sigma1.asDiagonal() * c.Omega.transpose();
  Matrix LH = g2 * H.sigma1.asDiagonal() * c.K.transpose() * G.sigma1.asDiagonal() * c.Omega;
  return {std::move(LG), std::move(LH)};
}

/// Kernel of the next step from the current coupling and the kept right
/// factors of the next step's side SVDs:
///   K' = phiG^T [[2g K Vy Sy^T Uy^T K, K Vy UpsH^{1/2}],
///                [UpsG^{1/2} Uy^T K,   2g Sy        ]] phiH.
inline Matrix advance_K(const CouplingState& c, const Matrix& phiG_next,
                        const Matrix& phiH_next) {
  const Index rG = c.K.rows(), rH = c.K.cols();
  if (phiG_next.rows() != 2 * rG || phiH_next.rows() != 2 * rH)
    throw Error(ErrorCode::DimensionMismatch, "next right factors do not match 2r rows");
  const double g2 = 2.0 * c.gamma;
  const Matrix Sy = detail::rect_diag(c.Sy, rG, rH);
  const Vector upsG = detail::upsilon(c.Sy, rG, g2 * g2).cwiseSqrt();
  const Vector upsH = detail::upsilon(c.Sy, rH, g2 * g2).cwiseSqrt();
  Matrix mid(2 * rG, 2 * rH);
  mid.topLeftCorner(rG, rH) = g2 * c.K * c.Vy * Sy.transpose() * c.Uy.transpose() * c.K;
  mid.topRightCorner(rG, rH) = c.K * c.Vy * upsH.asDiagonal();
  mid.bottomLeftCorner(rG, rH) = upsG.asDiagonal() * c.Uy.transpose() * c.K;
  mid.bottomRightCorner(rG, rH) = g2 * Sy;
  return phiG_next.transpose() * mid * phiH_next;
}

/// First step: bases of [U0, U1] and [V0, V1], the 2m x 2l kernel, the two
/// side SVDs, truncation and K_1.
inline DsdatState init_j1(const CareProblem& p, const ShiftedOperator& op, double eps_g,
                          double eps_h, const StepOptions& opt = {},
                          StepDetail* detail = nullptr) {
  const CareProblem q = fold_weight(p);
  const double g = op.gamma();
  const Index m = q.m(), l = q.l();

  const Matrix U0 = op.solve(q.B);
  const Matrix V0 = op.solve(q.C.transpose(), true);
  const Matrix U1 = apply_a_tilde(op, U0);
  const Matrix V1 = apply_a_tilde(op, V0, true);
  const Matrix Y0 = q.B.transpose() * V0;
  const Matrix T0 = U0.transpose() * V0;

  Matrix UU(q.n(), 2 * m), VV(q.n(), 2 * l);
  UU << U0, U1;
  VV << V0, V1;
  const PivotedQr qrU = qr_col_pivot(UU, opt.qr_rank_unit);
  const PivotedQr qrV = qr_col_pivot(VV, opt.qr_rank_unit);
  if (qrU.rank == 0 || qrV.rank == 0)
    throw Error(ErrorCode::DegenerateProblem, qrU.rank == 0 ? "B = 0" : "C = 0");

  Matrix Y1 = Matrix::Zero(2 * m, 2 * l);
  Y1.topRightCorner(m, l) = Y0;
  Y1.bottomLeftCorner(m, l) = Y0;
  Y1.bottomRightCorner(m, l) = 2.0 * g * T0;
  const SvdFactors sy = svd(Y1, false);
  const Vector isqG = detail::upsilon(sy.S, 2 * m, 1.0).cwiseSqrt().cwiseInverse();
  const Vector isqH = detail::upsilon(sy.S, 2 * l, 1.0).cwiseSqrt().cwiseInverse();

  const Matrix coefU = qrU.coefficients();
  const Matrix coefV = qrV.coefficients();
  const SvdFactors fg = svd(coefU * sy.U * isqG.asDiagonal());
  const SvdFactors fh = svd(coefV * sy.V * isqH.asDiagonal());
  if (fg.S.size() == 0 || !(fg.S(0) > 0.0) || fh.S.size() == 0 || !(fh.S(0) > 0.0))
    throw Error(ErrorCode::DegenerateProblem, "first-step factor vanished");

  DsdatState s;
  s.G = detail::truncate_side(qrU.Q, fg, eps_g, "G-side");
  s.H = detail::truncate_side(qrV.Q, fh, eps_h, "H-side");
  const Matrix K1 = compute_K1(s.G.phi1, detail::rect_diag(sy.S, 2 * m, 2 * l), s.H.phi1);
  s.coupling = detail::make_coupling(s.G, s.H, K1, 1, g);
  s.Gt = detail::gram_of(s.G, g);
  s.Ht = detail::gram_of(s.H, g);
  if (detail) {
    detail->G = detail::side_detail(qrU.Q, coefU, fg, s.G.r());
    detail->H = detail::side_detail(qrV.Q, coefV, fh, s.H.r());
    detail->kernel = Y1;
  }
  return s;
}

/// One combined doubling-and-truncation step j -> j+1.
inline DsdatState doubling_truncation_step(const DsdatState& s, const ShiftedOperator& op,
                                           double eps_g, double eps_h,
                                           const StepOptions& opt = {},
                                           StepDetail* detail = nullptr) {
  const CouplingState& c = s.coupling;
  const double g = c.gamma, g2 = 2.0 * g;
  const Index rG = s.G.r(), rH = s.H.r();
  const std::uint64_t e = std::uint64_t{1} << c.j;

  const Matrix WU = apply_a_tilde_power(op, s.G.Q, e, false);
  const Matrix WV = apply_a_tilde_power(op, s.H.Q, e, true);
  const BasisExtension xu = extend_basis(s.G.Q, WU, opt.basis_drop_tol, opt.reorthogonalize);
  const BasisExtension xv = extend_basis(s.H.Q, WV, opt.basis_drop_tol, opt.reorthogonalize);

  const Matrix Sy = detail::rect_diag(c.Sy, rG, rH);
  const Vector isqG = detail::upsilon(c.Sy, rG, g2 * g2).cwiseSqrt().cwiseInverse();
  const Vector isqH = detail::upsilon(c.Sy, rH, g2 * g2).cwiseSqrt().cwiseInverse();

  auto side_matrix = [](const Vector& sig, const Matrix& B12, const Matrix& B22,
                        const BasisExtension& x) {
    const Index r = sig.size(), pn = x.R2.rows();
    Matrix M = Matrix::Zero(r + pn, 2 * r);
    M.topLeftCorner(r, r) = sig.asDiagonal();
    M.topRightCorner(r, r) = B12 + x.R12 * B22;
    M.bottomRightCorner(pn, r) = x.R2 * B22;
    return M;
  };
  auto coef_block = [](const BasisExtension& x, Index r) {
    const Index pn = x.R2.rows();
    Matrix T = Matrix::Zero(r + pn, 2 * r);
    T.topLeftCorner(r, r).setIdentity();
    T.topRightCorner(r, r) = x.R12;
    T.bottomRightCorner(pn, r) = x.R2;
    return T;
  };

  const Matrix B12G =
      -g2 * s.G.sigma1.asDiagonal() * c.K * c.Vy * Sy.transpose() * isqG.asDiagonal();
  const Matrix B22G = s.G.sigma1.asDiagonal() * c.Uy * isqG.asDiagonal();
  const Matrix B12H =
      -g2 * s.H.sigma1.asDiagonal() * c.K.transpose() * c.Uy * Sy * isqH.asDiagonal();
  const Matrix B22H = s.H.sigma1.asDiagonal() * c.Vy * isqH.asDiagonal();
  const Matrix MG = side_matrix(s.G.sigma1, B12G, B22G, xu);
  const Matrix MH = side_matrix(s.H.sigma1, B12H, B22H, xv);
  detail::require_finite(MG, "G-side step matrix");
  detail::require_finite(MH, "H-side step matrix");
  const SvdFactors fg = svd(MG);
  const SvdFactors fh = svd(MH);

  Matrix basisU(s.G.Q.rows(), rG + xu.Q_new.cols());
  basisU << s.G.Q, xu.Q_new;
  Matrix basisV(s.H.Q.rows(), rH + xv.Q_new.cols());
  basisV << s.H.Q, xv.Q_new;

  DsdatState out;
  out.G = detail::truncate_side(basisU, fg, eps_g, "G-side");
  out.H = detail::truncate_side(basisV, fh, eps_h, "H-side");
  Matrix K = advance_K(c, out.G.phi1, out.H.phi1);
  detail::require_finite(K, "coupling kernel");
  out.coupling = detail::make_coupling(out.G, out.H, std::move(K), c.j + 1, g);
  out.Gt = detail::gram_of(out.G, g);
  out.Ht = detail::gram_of(out.H, g);
  if (detail) {
    detail->G = detail::side_detail(basisU, coef_block(xu, rG), fg, out.G.r());
    detail->H = detail::side_detail(basisV, coef_block(xv, rH), fh, out.H.r());
    detail->kernel.resize(0, 0);
  }
  return out;
}

struct SolverConfig {
  double gamma = 1e-6;
  std::vector<double> trunc_tol{1e-15};  ///< per step; the last entry repeats
  std::optional<std::vector<double>> trunc_tol_g;  ///< G-side override
  double res_tol = 1e-13;
  int max_iter = 20;
  /// Stop when rho_X has not improved on its best value for this many
  /// consecutive steps (0 disables). Each further step doubles the solve count.
  int stall_steps = 2;
  Index dense_threshold = kDefaultDenseThreshold;
  bool compute_dual = true;
  bool record_history = true;
  StepOptions step;

  double eps_h(int j) const { return pick(trunc_tol, j); }
  double eps_g(int j) const { return trunc_tol_g ? pick(*trunc_tol_g, j) : pick(trunc_tol, j); }

 private:
  static double pick(const std::vector<double>& v, int j) {
    if (v.empty()) return 0.0;
    const std::size_t i = static_cast<std::size_t>(std::max(j, 1) - 1);
    return v[std::min(i, v.size() - 1)];
  }
};

enum class Termination { Converged, MaxIterations, Diverged, NearSingularPencil, Stagnated };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "Converged";
    case Termination::MaxIterations: return "MaxIterations";
    case Termination::Diverged: return "Diverged";
    case Termination::NearSingularPencil: return "NearSingularPencil";
    case Termination::Stagnated: return "Stagnated";
  }
  return "Unknown";
}

struct IterationRecord {
  int j = 0;
  double rho_x = 0.0;
  double rho_y = std::numeric_limits<double>::quiet_NaN();
  Index rank_x = 0;  ///< rank of the H-side iterate (approximates X)
  Index rank_y = 0;  ///< rank of the G-side iterate (approximates Y)
  double increment = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  std::uint64_t solves = 0;  ///< solves issued by this step
  Index max_small_dim = 0;   ///< largest dimension of any small dense matrix in the step
};

struct RunRecord {
  std::vector<IterationRecord> history;
  Termination termination = Termination::MaxIterations;
  std::string message;
  int iterations = 0;
  std::uint64_t total_solves = 0;
  double total_seconds = 0.0;
  double final_rho_x = 0.0;
  double final_rho_y = std::numeric_limits<double>::quiet_NaN();
};

struct SolveResult {
  LowRankGram X;
  LowRankGram Y;
  RunRecord record;
};

/// Runs the first step and then doubling steps until the normalized residual
/// of the H-side iterate drops to cfg.res_tol, cfg.max_iter steps have run,
/// the residual diverges or stops improving, or a step meets a near-singular
/// pencil.
inline SolveResult solve(const CareProblem& p_in, const SolverConfig& cfg) {
  CareProblem p0 = p_in;
  p0.gamma = cfg.gamma;
  validate_problem(p0);
  const CareProblem p = fold_weight(p0);
  const ShiftedOperator op(p, cfg.dense_threshold);

  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  SolveResult res;
  RunRecord& rec = res.record;

  DsdatState st;
  std::optional<LowRankGram> prev_H;
  double rho_min = std::numeric_limits<double>::infinity();
  int above = 0;
  int stalled = 0;
  std::uint64_t solves_before = op.solve_count();

  for (int j = 1; j <= cfg.max_iter; ++j) {
    const auto t0 = clock::now();
    try {
      st = (j == 1) ? init_j1(p, op, cfg.eps_g(1), cfg.eps_h(1), cfg.step)
                    : doubling_truncation_step(st, op, cfg.eps_g(j), cfg.eps_h(j), cfg.step);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NearSingularPencil || j == 1) throw;
      rec.termination = Termination::NearSingularPencil;
      rec.message = e.what();
      break;
    }
    IterationRecord it;
    it.j = j;
    it.rho_x = residual_lowrank(p, st.Ht).rho;
    if (cfg.compute_dual) it.rho_y = residual_dual_lowrank(p, st.Gt).rho;
    it.rank_x = st.H.r();
    it.rank_y = st.G.r();
    if (prev_H) {
      const double nh = frobenius_norm(st.Ht);
      it.increment = joint_difference(st.Ht, *prev_H).norm() / (nh > 0.0 ? nh : 1.0);
    }
    it.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    const std::uint64_t now = op.solve_count();
    it.solves = now - solves_before;
    solves_before = now;
    it.max_small_dim = std::max({st.G.phi1.rows(), st.H.phi1.rows(), st.G.r(), st.H.r()});
    if (cfg.record_history) rec.history.push_back(it);
    rec.iterations = j;
    rec.final_rho_x = it.rho_x;
    rec.final_rho_y = it.rho_y;
    res.X = st.Ht;
    res.Y = st.Gt;
    prev_H = st.Ht;

    if (!std::isfinite(it.rho_x)) {
      rec.termination = Termination::Diverged;
      rec.message = "residual is not finite";
      break;
    }
    if (it.rho_x <= cfg.res_tol) {
      rec.termination = Termination::Converged;
      break;
    }
    stalled = (it.rho_x >= rho_min) ? stalled + 1 : 0;
    rho_min = std::min(rho_min, it.rho_x);
    above = (it.rho_x > 100.0 * rho_min) ? above + 1 : 0;
    if (above >= 3) {
      rec.termination = Termination::Diverged;
      rec.message = "residual stayed above 100x its running minimum for 3 steps";
      break;
    }
    if (cfg.stall_steps > 0 && stalled >= cfg.stall_steps) {
      rec.termination = Termination::Stagnated;
      rec.message = "residual did not improve for " + std::to_string(stalled) + " steps";
      break;
    }
    rec.termination = Termination::MaxIterations;
  }
  rec.total_solves = op.solve_count();
  rec.total_seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  return res;
}

}  // namespace dsdat
