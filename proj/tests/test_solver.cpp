#include <gtest/gtest.h>

#include <cmath>

#include "dsdat/dsda_t.hpp"
#include "dsdat/generators.hpp"
#include "dsdat/reference.hpp"
#include "dsdat/residual.hpp"

using namespace dsdat;

namespace {

Matrix M1(double v) { return Matrix::Constant(1, 1, v); }

CareProblem scalar_problem(double gamma = 1.0) {
  return CareProblem::from_dense(M1(-1.0), M1(1.0), M1(1.0), gamma);
}

CareProblem well_conditioned(Index n, std::uint64_t seed, Index m = 2, Index l = 2) {
  return random_problem(well_conditioned_spec(n, m, l, seed), kWellConditionedGamma);
}

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::CheckFailed;
}

constexpr double kH1 = 12.0 / 29.0;            // 0.4137931
constexpr double kH2 = 0.41421319796954315;    // 0.4142132
const double kXstar = std::sqrt(2.0) - 1.0;    // 0.41421356

}  // namespace

// ---- coupled doubling ----------------------------------------------------------

TEST(CoupledDoubling, ScalarSteps) {
  const SdaState s0{M1(0.2), M1(0.4), M1(0.4), 0};
  const SdaState s1 = sda_step(s0);
  EXPECT_NEAR(s1.H(0, 0), kH1, 1e-15);
  EXPECT_NEAR(s1.G(0, 0), kH1, 1e-15);
  EXPECT_NEAR(s1.A(0, 0), 1.0 / 29.0, 1e-15);
  EXPECT_NEAR(s1.A(0, 0), 0.0344828, 1e-7);
  EXPECT_NEAR(sda_step(s1).H(0, 0), kH2, 1e-15);
  EXPECT_EQ(s1.k, 1);
}

TEST(CoupledDoubling, ZeroGramsSquareA) {
  Rng rng(1);
  const Matrix A = rng.normal(4, 4);
  const SdaState s1 = sda_step({A, Matrix::Zero(4, 4), Matrix::Zero(4, 4), 0});
  EXPECT_LE((s1.A - A * A).norm(), 1e-14 * (A * A).norm());
  EXPECT_EQ(s1.G.norm(), 0.0);
  EXPECT_EQ(s1.H.norm(), 0.0);
}

TEST(CoupledDoubling, ScalarCareSolution) {
  const SdaSolution s = sda_solve_care(scalar_problem());
  EXPECT_NEAR(s.X(0, 0), kXstar, 1e-14);
  EXPECT_NEAR(s.Y(0, 0), kXstar, 1e-14);
}

TEST(CoupledDoubling, ZeroOutputGivesZeroSolution) {
  CareProblem p = well_conditioned(8, 2);
  p.C.setZero();
  EXPECT_EQ(sda_solve_care(p).X.norm(), 0.0);
}

TEST(CoupledDoubling, ZeroInputSolvesLyapunov) {
  CareProblem p = well_conditioned(8, 3);
  p.B.setZero();
  const Matrix A = p.dense_A(), H = p.dense_H();
  const Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  // vec(A^T X + X A) = (I kron A^T + A^T kron I) vec(X)
  Matrix K = Matrix::Zero(n * n, n * n);
  for (Index j = 0; j < n; ++j) K.block(j * n, j * n, n, n) += A.transpose();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) K.block(i * n, j * n, n, n) += A(j, i) * I;
  const Vector x = K.partialPivLu().solve(-H.reshaped());
  const Matrix Xl = x.reshaped(n, n);
  EXPECT_LE(rel(sda_solve_care(p).X, Xl), 1e-12);
}

TEST(CoupledDoubling, DareExamples) {
  const Matrix H = (Matrix(2, 2) << 2, 1, 1, 3).finished();
  const SdaSolution z = sda_solve_dare(Matrix::Zero(2, 2), Matrix::Identity(2, 2), H);
  EXPECT_LE((z.X - H).norm(), 1e-15);
  EXPECT_NEAR(sda_solve_dare(M1(0.5), M1(0.0), M1(1.0)).X(0, 0), 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(sda_solve_dare(M1(0.9), M1(0.0), M1(2.0)).X(0, 0), 2.0 / (1.0 - 0.81), 1e-12);
}

TEST(CoupledDoubling, IterationCapReported) {
  EXPECT_EQ(code_of([] { sda_solve_care(scalar_problem(), 0.0, 1); }), ErrorCode::MaxIterations);
}

// ---- Hamiltonian oracle ------------------------------------------------------------

TEST(HamiltonianOracle, Scalar) {
  EXPECT_NEAR(hamiltonian_care_oracle(scalar_problem()).X(0, 0), kXstar, 1e-14);
}

TEST(HamiltonianOracle, ZeroOutput) {
  CareProblem p = well_conditioned(6, 4);
  p.C.setZero();
  EXPECT_LE(hamiltonian_care_oracle(p).X.norm(), 1e-14);
}

TEST(HamiltonianOracle, RandomResidual) {
  const CareProblem p = well_conditioned(10, 5);
  const Matrix X = hamiltonian_care_oracle(p).X;
  const Matrix A = p.dense_A(), G = p.dense_G(), H = p.dense_H();
  const Matrix R = A.transpose() * X + X * A - X * G * X + H;
  EXPECT_LE(R.norm(), 1e-10 * H.norm());
  const Eigen::VectorXcd ev = (A - G * X).eigenvalues();
  EXPECT_LT(ev.real().maxCoeff(), 0.0);
}

// ---- dense decoupled form -------------------------------------------------------------

TEST(DecoupledKernel, ScalarFirstStep) {
  const CareProblem p = scalar_problem();
  const ShiftedOperator op(p);
  const DsdaKernel d1 = dsda_kernel_step(dsda_kernel_init(p, op), op);
  EXPECT_LE((d1.Ubreve - (Matrix(1, 2) << -0.5, 0).finished()).norm(), 1e-15);
  EXPECT_LE((d1.Yk - (Matrix(2, 2) << 0, -0.5, -0.5, 0.5).finished()).norm(), 1e-15);
  const DenseIterates ev = dsda_evaluate(d1, op);
  EXPECT_NEAR(ev.H(0, 0), 0.75 / 1.8125, 1e-15);
  EXPECT_NEAR(ev.H(0, 0), kH1, 1e-15);
}

TEST(DecoupledKernel, ZeroOutput) {
  CareProblem p = well_conditioned(6, 6);
  p.C.setZero();
  const ShiftedOperator op(p);
  DsdaKernel d = dsda_kernel_init(p, op);
  for (int k = 0; k < 3; ++k) d = dsda_kernel_step(d, op);
  EXPECT_EQ(d.Vbreve.norm(), 0.0);
  EXPECT_EQ(d.Tk.norm(), 0.0);
  EXPECT_EQ(d.Yk.norm(), 0.0);
  EXPECT_EQ(dsda_evaluate(d, op).H.norm(), 0.0);
}

TEST(DecoupledKernel, MatchesCoupledDoubling) {
  const CareProblem p = well_conditioned(15, 7);
  const ShiftedOperator op(p);
  const auto its = sda_run(sda_seed_state(p), 5);
  DsdaKernel d = dsda_kernel_init(p, op);
  for (int k = 1; k <= 5; ++k) {
    d = dsda_kernel_step(d, op);
    const DenseIterates ev = dsda_evaluate(d, op);
    EXPECT_LE(rel(ev.H, its[std::size_t(k)].H), 1e-10) << k;
    EXPECT_LE(rel(ev.G, its[std::size_t(k)].G), 1e-10) << k;
    EXPECT_LE(rel(ev.A, its[std::size_t(k)].A), 1e-10) << k;
  }
}

TEST(DecoupledKernel, KernelCapEnforced) {
  const CareProblem p = well_conditioned(6, 8);
  const ShiftedOperator op(p);
  DsdaKernel d = dsda_kernel_init(p, op);
  d = dsda_kernel_step(d, op, 4);
  EXPECT_EQ(code_of([&] { dsda_kernel_step(d, op, 4); }), ErrorCode::KernelCapExceeded);
}

TEST(CoupledDoubling, ClosedLoopMapDecaysQuadratically) {
  const auto its = sda_run(sda_seed_state(well_conditioned(12, 9)), 6);
  for (std::size_t k = 1; k + 1 < its.size(); ++k) {
    const double a = its[k].A.norm(), b = its[k + 1].A.norm();
    if (b < 1e-14) break;
    EXPECT_LE(std::log(b), 2.0 * std::log(a) + std::log(4.0 * 12.0)) << k;
  }
}

// ---- truncated solver: small-matrix recursions ---------------------------------------

TEST(KernelRecursion, FirstKernelFromIdentityFactors) {
  Matrix Sy = Matrix::Zero(4, 3);
  Sy.diagonal() << 3, 2, 1;
  const Matrix K = compute_K1(Matrix::Identity(4, 2), Sy, Matrix::Identity(3, 2));
  EXPECT_LE((K - Sy.topLeftCorner(2, 2)).norm(), 0.0);
  EXPECT_EQ(compute_K1(Matrix::Identity(4, 2), Matrix::Zero(4, 3), Matrix::Identity(3, 2)).norm(),
            0.0);
}

TEST(KernelRecursion, LVanishesWithZeroKernelOrShift) {
  SideState G{Matrix::Identity(5, 2), Eigen::Vector2d(2, 1), Matrix::Identity(4, 2)};
  SideState H{Matrix::Identity(5, 3), Eigen::Vector3d(3, 2, 1), Matrix::Identity(6, 3)};
  CouplingState c;
  c.gamma = 0.5;
  c.K = Matrix::Zero(2, 3);
  c.Omega = Matrix::Ones(2, 3);
  auto [LG, LH] = compute_L(G, H, c);
  EXPECT_EQ(LG.norm(), 0.0);
  EXPECT_EQ(LH.norm(), 0.0);
  c.K = Matrix::Ones(2, 3);
  c.gamma = 0.0;
  std::tie(LG, LH) = compute_L(G, H, c);
  EXPECT_EQ(LG.norm(), 0.0);
  EXPECT_EQ(LH.norm(), 0.0);
  c.K = Matrix::Ones(3, 3);
  EXPECT_EQ(code_of([&] { compute_L(G, H, c); }), ErrorCode::DimensionMismatch);
}

TEST(KernelRecursion, AdvanceWithVanishingKernelSpectrum) {
  Rng rng(2);
  const Index r = 3;
  CouplingState c;
  c.gamma = 0.7;
  c.Uy = svd(rng.normal(r, r)).U;
  c.Vy = svd(rng.normal(r, r)).U;
  c.Sy = Vector::Zero(r);
  const Matrix phiG = svd(rng.normal(2 * r, 2 * r)).U.leftCols(4);
  const Matrix phiH = svd(rng.normal(2 * r, 2 * r)).U.leftCols(5);

  c.K = Matrix::Identity(r, r);
  Matrix mid = Matrix::Zero(2 * r, 2 * r);
  mid.topRightCorner(r, r) = c.Vy;
  mid.bottomLeftCorner(r, r) = c.Uy.transpose();
  EXPECT_LE((advance_K(c, phiG, phiH) - phiG.transpose() * mid * phiH).norm(), 1e-14);

  c.K = Matrix::Zero(r, r);
  EXPECT_EQ(advance_K(c, phiG, phiH).norm(), 0.0);
  EXPECT_EQ(code_of([&] { advance_K(c, phiG.topRows(r), phiH); }), ErrorCode::DimensionMismatch);
}

// ---- truncated solver: steps --------------------------------------------------------

TEST(TruncatedSteps, ScalarChain) {
  const CareProblem p = scalar_problem();
  const ShiftedOperator op(p);
  DsdatState s = init_j1(p, op, 1e-15, 1e-15);
  EXPECT_NEAR(s.Ht.dense()(0, 0), kH1, 1e-14);
  EXPECT_EQ(s.j(), 1);
  s = doubling_truncation_step(s, op, 1e-15, 1e-15);
  EXPECT_NEAR(s.Ht.dense()(0, 0), kH2, 1e-12);
  s = doubling_truncation_step(s, op, 1e-15, 1e-15);
  const double h3 = sda_run(sda_seed_state(p), 3).back().H(0, 0);
  EXPECT_NEAR(s.Ht.dense()(0, 0), h3, 1e-12);
  EXPECT_EQ(s.j(), 3);
}

TEST(TruncatedSteps, ZeroOutputIsDegenerate) {
  CareProblem p = well_conditioned(6, 10);
  p.C.setZero();
  const ShiftedOperator op(p);
  EXPECT_EQ(code_of([&] { init_j1(p, op, 1e-15, 1e-15); }), ErrorCode::DegenerateProblem);
}

TEST(TruncatedSteps, UntruncatedFirstStepMatchesDenseForm) {
  const CareProblem p = well_conditioned(20, 11);
  const ShiftedOperator op(p);
  const DsdatState s = init_j1(p, op, 0.0, 0.0);
  const DenseIterates ev = dsda_evaluate(dsda_kernel_step(dsda_kernel_init(p, op), op), op);
  EXPECT_LE((s.Ht.dense() - ev.H).norm(), 1e-12 * ev.H.norm());
  EXPECT_LE((s.Gt.dense() - ev.G).norm(), 1e-12 * ev.G.norm());
}

TEST(TruncatedSteps, BasesStayOrthonormalAndRanksBounded) {
  const CareProblem p = well_conditioned(40, 12);
  const ShiftedOperator op(p);
  DsdatState s = init_j1(p, op, 1e-12, 1e-12);
  for (int j = 2; j <= 6; ++j) {
    const Index rG = s.G.r(), rH = s.H.r();
    s = doubling_truncation_step(s, op, 1e-12, 1e-12);
    EXPECT_LE(s.G.r(), 2 * rG);
    EXPECT_LE(s.H.r(), 2 * rH);
    for (const Matrix* Q : {&s.G.Q, &s.H.Q}) {
      const Index k = Q->cols();
      EXPECT_LE((Q->transpose() * *Q - Matrix::Identity(k, k)).norm(), 1e-12);
    }
    EXPECT_EQ(s.coupling.K.rows(), s.G.r());
    EXPECT_EQ(s.coupling.K.cols(), s.H.r());
  }
}

// ---- driver ------------------------------------------------------------------------

TEST(Solve, ScalarConvergesQuickly) {
  SolverConfig cfg;
  cfg.gamma = 1.0;
  const SolveResult r = solve(scalar_problem(), cfg);
  EXPECT_EQ(r.record.termination, Termination::Converged);
  EXPECT_LE(r.record.iterations, 6);
  EXPECT_NEAR(r.X.dense()(0, 0), kXstar, 1e-12);
  EXPECT_NEAR(r.Y.dense()(0, 0), kXstar, 1e-12);
  EXPECT_LE(r.record.final_rho_x, 1e-13);
  EXPECT_EQ(r.record.history.size(), std::size_t(r.record.iterations));
}

TEST(Solve, SingleIterationCapIsReported) {
  SolverConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_iter = 1;
  const SolveResult r = solve(scalar_problem(), cfg);
  EXPECT_EQ(r.record.termination, Termination::MaxIterations);
  EXPECT_EQ(r.record.iterations, 1);
  EXPECT_STREQ(to_string(r.record.termination), "MaxIterations");
}

TEST(Solve, StopsWhenResidualStopsImproving) {
  SolverConfig cfg;
  cfg.gamma = 1.0;
  cfg.res_tol = 0.0;
  const SolveResult r = solve(scalar_problem(), cfg);
  EXPECT_EQ(r.record.termination, Termination::Stagnated);
  EXPECT_LT(r.record.iterations, cfg.max_iter);
  EXPECT_NEAR(r.X.dense()(0, 0), kXstar, 1e-12);
  cfg.stall_steps = 0;
  cfg.max_iter = 9;
  EXPECT_EQ(solve(scalar_problem(), cfg).record.termination, Termination::MaxIterations);
}

TEST(Solve, RandomInstanceMatchesOracleWithSparsePath) {
  const CareProblem p = well_conditioned(60, 13);
  SolverConfig cfg;
  cfg.gamma = kWellConditionedGamma;
  cfg.dense_threshold = 0;  // exercise the sparse factorization
  const SolveResult r = solve(p, cfg);
  ASSERT_EQ(r.record.termination, Termination::Converged);
  EXPECT_LE(r.record.final_rho_x, 1e-13);
  EXPECT_LE(rel(r.X.dense(), hamiltonian_care_oracle(p).X), 1e-9);
  EXPECT_LT(r.X.rank(), p.n());
}

TEST(Solve, SolveCountsFollowDoublingProfile) {
  const CareProblem p = well_conditioned(40, 14);
  SolverConfig cfg;
  cfg.gamma = kWellConditionedGamma;
  const SolveResult r = solve(p, cfg);
  const auto& h = r.record.history;
  ASSERT_GE(h.size(), 3u);
  EXPECT_EQ(h[0].solves, std::uint64_t(2 * (p.m() + p.l())));
  std::uint64_t total = h[0].solves;
  for (std::size_t i = 1; i < h.size(); ++i) {
    const std::uint64_t expect = (std::uint64_t(1) << i) * std::uint64_t(h[i - 1].rank_x + h[i - 1].rank_y);
    EXPECT_EQ(h[i].solves, expect) << "step " << h[i].j;
    total += h[i].solves;
  }
  EXPECT_EQ(r.record.total_solves, total);
}

TEST(Solve, ScheduleLastEntryRepeats) {
  SolverConfig cfg;
  cfg.trunc_tol = {1e-6, 1e-8, 1e-10};
  EXPECT_EQ(cfg.eps_h(1), 1e-6);
  EXPECT_EQ(cfg.eps_h(3), 1e-10);
  EXPECT_EQ(cfg.eps_h(9), 1e-10);
  EXPECT_EQ(cfg.eps_g(2), 1e-8);
  cfg.trunc_tol_g = std::vector<double>{1e-3};
  EXPECT_EQ(cfg.eps_g(5), 1e-3);
}

TEST(Solve, RejectsInvalidInput) {
  CareProblem p = scalar_problem();
  p.R = M1(-1.0);
  SolverConfig cfg;
  cfg.gamma = 1.0;
  EXPECT_EQ(code_of([&] { solve(p, cfg); }), ErrorCode::WeightNotSPD);
}
