#pragma once

// Self-check suite: runs the dense oracles and error-theory verifiers on a
// seeded instance (or the scalar fixture) and reports one line per check.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dsdat/diagnostics.hpp"
#include "dsdat/dsda_t.hpp"
#include "dsdat/generators.hpp"
#include "dsdat/reference.hpp"
#include "dsdat/residual.hpp"

namespace dsdat::app {

struct CheckOptions {
  Index n = 20;
  Index m = 2;
  Index l = 2;
  std::uint64_t seed = 1;
  int k_max = 6;
  bool scalar = false;
  bool skip_reorthogonalization = false;  ///< fault injection
};

struct CheckItem {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckItem> items;
  bool all_pass() const {
    for (const auto& i : items)
      if (!i.pass) return false;
    return !items.empty();
  }
  std::vector<std::string> failing() const {
    std::vector<std::string> f;
    for (const auto& i : items)
      if (!i.pass) f.push_back(i.name);
    return f;
  }
};

namespace detail {

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double nb = b.norm();
  return nb > 0.0 ? (a - b).norm() / nb : (a - b).norm();
}

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline void add(CheckReport& r, const std::string& name, double value, double limit,
                bool below = true) {
  const bool ok = below ? (value <= limit) : (value >= limit);
  r.items.push_back({name, ok, sci(value) + (below ? " <= " : " >= ") + sci(limit)});
}

inline double orthonormality_defect(const Matrix& Q) {
  return (Q.transpose() * Q - Matrix::Identity(Q.cols(), Q.cols())).norm();
}

inline void run_in_check(CheckReport& r, const std::string& name, const auto& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    r.items.push_back({name, false, std::string("error: ") + e.what()});
  }
}

}  // namespace detail

inline CheckReport run_scalar_check() {
  CheckReport r;
  const CareProblem p = CareProblem::from_dense(Matrix::Constant(1, 1, -1.0), Matrix::Ones(1, 1),
                                                Matrix::Ones(1, 1), 1.0);
  const double xstar = std::sqrt(2.0) - 1.0;
  detail::run_in_check(r, "scalar seed", [&] {
    const ShiftedOperator op(p);
    const SdaSeed s = sda_seed(p, op);
    const double e = std::max({std::abs(s.K_gamma(0, 0) + 2.5), std::abs(s.A0(0, 0) - 0.2),
                               std::abs(s.G0(0, 0) - 0.4), std::abs(s.H0(0, 0) - 0.4),
                               std::abs(s.U0(0, 0) + 0.5), std::abs(s.Y0(0, 0) + 0.5),
                               std::abs(s.T0(0, 0) - 0.25)});
    detail::add(r, "scalar seed", e, 1e-14);
  });
  detail::run_in_check(r, "scalar truncated iterates", [&] {
    const ShiftedOperator op(p);
    DsdatState st = init_j1(p, op, 1e-15, 1e-15);
    const double h1 = st.Ht.dense()(0, 0);
    st = doubling_truncation_step(st, op, 1e-15, 1e-15);
    const double h2 = st.Ht.dense()(0, 0);
    detail::add(r, "scalar H1", std::abs(h1 - 12.0 / 29.0), 1e-12);
    detail::add(r, "scalar H2", std::abs(h2 - 0.41421319796954315), 1e-12);
  });
  detail::run_in_check(r, "scalar solve", [&] {
    SolverConfig cfg;
    cfg.gamma = 1.0;
    const SolveResult res = solve(p, cfg);
    detail::add(r, "scalar solution", std::abs(res.X.dense()(0, 0) - xstar), 1e-12);
    detail::add(r, "scalar iterations", double(res.record.iterations), 6.0);
  });
  detail::run_in_check(r, "scalar oracles", [&] {
    detail::add(r, "scalar coupled doubling", std::abs(sda_solve_care(p).X(0, 0) - xstar), 1e-12);
    detail::add(r, "scalar Hamiltonian oracle",
                std::abs(hamiltonian_care_oracle(p).X(0, 0) - xstar), 1e-12);
    LowRankGram g{Matrix::Ones(1, 1), Vector::Constant(1, std::sqrt(12.0 / 29.0)), 1.0};
    detail::add(r, "scalar residual", std::abs(residual_lowrank(p, g).rho - (1.0 / 841.0) / (24.0 / 29.0 + 144.0 / 841.0 + 1.0)), 1e-14);
  });
  return r;
}

inline CheckReport run_check(const CheckOptions& o) {
  if (o.scalar) return run_scalar_check();
  CheckReport r;
  const CareProblem p =
      random_problem(well_conditioned_spec(o.n, o.m, o.l, o.seed), kWellConditionedGamma);
  StepOptions opt;
  opt.reorthogonalize = !o.skip_reorthogonalization;
  const int K = o.k_max;

  detail::run_in_check(r, "decoupled iterates equal coupled doubling", [&] {
    const ShiftedOperator op(p, p.n() + 1);
    const auto its = sda_run(sda_seed_state(p), K);
    DsdaKernel d = dsda_kernel_init(p, op);
    double worst = 0.0;
    for (int k = 0; k <= K; ++k) {
      if (k > 0) d = dsda_kernel_step(d, op);
      const DenseIterates ev = dsda_evaluate(d, op);
      worst = std::max({worst, detail::rel_err(ev.A, its[std::size_t(k)].A),
                        detail::rel_err(ev.G, its[std::size_t(k)].G),
                        detail::rel_err(ev.H, its[std::size_t(k)].H)});
    }
    detail::add(r, "decoupled iterates equal coupled doubling", worst, 1e-10);
  });

  detail::run_in_check(r, "untruncated trace", [&] {
    const ShiftedOperator op(p, p.n() + 1);
    const DenseTrace tr = dense_dsda_t_trace(p, {0.0}, K, opt);
    DsdaKernel d = dsda_kernel_init(p, op);
    double worst = 0.0, ortho = 0.0;
    for (const TraceStep& t : tr.steps) {
      d = dsda_kernel_step(d, op);
      const DenseIterates ev = dsda_evaluate(d, op);
      worst = std::max({worst, detail::rel_err(t.state.Gt.dense(), ev.G),
                        detail::rel_err(t.state.Ht.dense(), ev.H)});
      ortho = std::max({ortho, detail::orthonormality_defect(t.state.G.Q),
                        detail::orthonormality_defect(t.state.H.Q)});
    }
    detail::add(r, "eps = 0 iterates equal decoupled iterates", worst, 1e-10);
    detail::add(r, "basis orthonormality (eps = 0)", ortho, 1e-10);
  });

  for (double eps : {1e-12, 1e-8, 1e-6}) {
    const std::string tag = " (eps = " + detail::sci(eps) + ")";
    detail::run_in_check(r, "trace" + tag, [&] {
      const DenseTrace tr = dense_dsda_t_trace(p, {eps}, K, opt);
      double sig = 0.0, lrec = 0.0, akern = 0.0, sda = 0.0, ortho = 0.0, mono = 0.0;
      for (const TraceStep& t : tr.steps) {
        const auto [EG, EY] = ::dsdat::detail::kernel_forms(t.kernel);
        (void)EY;
        const Matrix YtY = Matrix::Identity(t.kernel.cols(), t.kernel.cols()) +
                           t.kernel.transpose() * t.kernel;
        const Matrix EH = YtY.llt().solve(Matrix::Identity(YtY.rows(), YtY.cols()));
        const Vector s2g = t.state.G.sigma1.array().square();
        const Vector s2h = t.state.H.sigma1.array().square();
        sig = std::max({sig, detail::rel_err(t.NG * EG * t.NG.transpose(), Matrix(s2g.asDiagonal())),
                        detail::rel_err(t.NH * EH * t.NH.transpose(), Matrix(s2h.asDiagonal()))});
        lrec = std::max({lrec, detail::rel_err(t.LG_rec, t.LG_direct),
                         detail::rel_err(t.LH_rec, t.LH_direct)});
        akern = std::max(akern, detail::rel_err(t.A_from_K, t.A_trunc));
        sda = std::max(sda, t.sda_step_defect);
        ortho = std::max({ortho, detail::orthonormality_defect(t.state.G.Q),
                          detail::orthonormality_defect(t.state.H.Q)});
      }
      for (std::size_t j = 0; j + 1 < tr.steps.size(); ++j) {
        const MonotonicityReport m =
            monotonicity_check(std::vector<Matrix>{tr.steps[j].H_trunc, tr.steps[j + 1].H_pre});
        mono = std::min(mono, m.min_eigenvalues.front() /
                                  std::max(1.0, tr.steps[j + 1].H_pre.norm()));
      }
      detail::add(r, "singular-value identity" + tag, sig, 1e-10);
      detail::add(r, "L recursion equals direct form" + tag, lrec, 1e-10);
      detail::add(r, "kernel form of A equals direct form" + tag, akern, 1e-10);
      detail::add(r, "coupled step from truncated state" + tag, sda, 1e-10);
      detail::add(r, "basis orthonormality" + tag, ortho, 1e-10);
      detail::add(r, "monotone within each truncation level" + tag, mono, -1e-12, false);
      const BoundCheck b1 = truncation_bound_check_j1(tr, eps);
      r.items.push_back({"first-step truncation bound" + tag, b1.status == BoundStatus::Pass,
                         detail::sci(b1.lhs) + " <= " + detail::sci(b1.rhs)});
      bool all = true;
      double worst_ratio = 0.0;
      for (int s = 1; s < K; ++s) {
        const BoundCheck bs = truncation_bound_check_js(tr, s, eps);
        all = all && bs.status == BoundStatus::Pass;
        if (bs.rhs > 0.0) worst_ratio = std::max(worst_ratio, bs.lhs / bs.rhs);
      }
      r.items.push_back({"later-step truncation bounds" + tag, all,
                         "max lhs/rhs " + detail::sci(worst_ratio)});
    });
  }

  detail::run_in_check(r, "coupled doubling monotone", [&] {
    const auto its = sda_run(sda_seed_state(p), K);
    std::vector<Matrix> hs;
    for (const auto& s : its) hs.push_back(s.H);
    const MonotonicityReport m = monotonicity_check(hs, 1e-12);
    r.items.push_back({"coupled doubling monotone", m.pass, ""});
  });

  detail::run_in_check(r, "solver", [&] {
    const HamiltonianSolution ho = hamiltonian_care_oracle(p);
    const auto its = sda_run(sda_seed_state(p), 4);
    double defect = 0.0;
    for (const auto& s : its) defect = std::max(defect, dare_fixed_point_defect(s.A, s.G, s.H, ho.X));
    detail::add(r, "DARE fixed point of doubling iterates", defect, 1e-9);

    SolverConfig cfg;
    cfg.gamma = kWellConditionedGamma;
    cfg.step = opt;
    const SolveResult res = solve(p, cfg);
    detail::add(r, "solver residual", res.record.final_rho_x, cfg.res_tol);
    detail::add(r, "solver agrees with Hamiltonian oracle", detail::rel_err(res.X.dense(), ho.X),
                1e-9);
    detail::add(r, "low-rank residual equals dense residual",
                std::abs(residual_lowrank(p, res.X).rho - residual_dense(p, res.X.dense()).rho),
                1e-12);
    detail::add(r, "solver basis orthonormality",
                std::max(detail::orthonormality_defect(res.X.Q), detail::orthonormality_defect(res.Y.Q)),
                1e-10);
    std::vector<double> h;
    for (const auto& it : res.record.history) h.push_back(it.rho_x);
    detail::add(r, "convergence order", convergence_order(h), 1.7, false);
  });
  return r;
}

}  // namespace dsdat::app
