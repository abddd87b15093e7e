// Command-line front end: solve, bench and check subcommands.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "dsdat/app/check.hpp"
#include "dsdat/app/config.hpp"
#include "dsdat/app/run.hpp"

namespace {

using dsdat::app::json;

void report_error(std::string_view code, const std::string& message) {
  std::cerr << json{{"error", std::string(code)}, {"message", message}}.dump() << '\n';
}

void apply_thread_override() {
  if (const char* v = std::getenv("DSDAT_NUM_THREADS")) {
    const int t = std::atoi(v);
    if (t > 0) Eigen::setNbThreads(t);
  }
}

struct SolveArgs {
  dsdat::app::ProblemFiles files;
  std::string config_path;
  std::string out;
  std::string trunc_tol, trunc_tol_g;
  double gamma = 0.0;
  double res_tol = 0.0;
  int max_iter = 0;
  int stall_steps = -1;
  bool no_dual = false;
};

int do_solve(const SolveArgs& a) {
  dsdat::SolverConfig cfg;
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw dsdat::Error(dsdat::ErrorCode::IoError, "cannot open " + a.config_path);
    cfg = dsdat::app::config_from_json(json::parse(in));
  }
  if (a.gamma > 0.0) cfg.gamma = a.gamma;
  if (!a.trunc_tol.empty()) cfg.trunc_tol = dsdat::app::parse_schedule_list(a.trunc_tol);
  if (!a.trunc_tol_g.empty()) cfg.trunc_tol_g = dsdat::app::parse_schedule_list(a.trunc_tol_g);
  if (a.res_tol > 0.0) cfg.res_tol = a.res_tol;
  if (a.max_iter > 0) cfg.max_iter = a.max_iter;
  if (a.stall_steps >= 0) cfg.stall_steps = a.stall_steps;
  if (a.no_dual) cfg.compute_dual = false;
  dsdat::app::apply_env_overrides(cfg);

  const dsdat::app::LoadedProblem lp = dsdat::app::load_problem(a.files, cfg.gamma);
  const dsdat::app::RunArtifact art = dsdat::app::run_solve(lp.problem, cfg, lp.info, a.out);
  const dsdat::RunRecord& r = art.result.record;
  std::cout << json{{"termination", dsdat::to_string(r.termination)},
                    {"iterations", r.iterations},
                    {"rho_x", r.final_rho_x},
                    {"rank_x", art.result.X.rank()},
                    {"rank_y", art.result.Y.rank()},
                    {"solves", r.total_solves},
                    {"seconds", r.total_seconds},
                    {"out", a.out}}
                   .dump()
            << '\n';
  return dsdat::app::exit_code(r.termination);
}

int do_bench(const std::string& spec_path, const std::string& out) {
  std::ifstream in(spec_path);
  if (!in) throw dsdat::Error(dsdat::ErrorCode::IoError, "cannot open " + spec_path);
  json spec;
  try {
    spec = json::parse(in);
  } catch (const json::exception& e) {
    throw dsdat::Error(dsdat::ErrorCode::ParseError, e.what());
  }
  const json report =
      dsdat::app::run_bench(spec, out, std::filesystem::path(spec_path).parent_path());
  const std::string table = dsdat::app::bench_table(report);
  std::ofstream(std::filesystem::path(out) / "bench.md") << table;
  std::cout << table;
  return dsdat::app::kExitOk;
}

int do_check(const dsdat::app::CheckOptions& o) {
  const dsdat::app::CheckReport r = dsdat::app::run_check(o);
  for (const auto& item : r.items)
    std::cout << (item.pass ? "PASS " : "FAIL ") << item.name
              << (item.detail.empty() ? "" : "  [" + item.detail + "]") << '\n';
  if (r.all_pass()) return dsdat::app::kExitOk;
  std::string failing;
  for (const auto& f : r.failing()) failing += (failing.empty() ? "" : "; ") + f;
  report_error(dsdat::to_string(dsdat::ErrorCode::CheckFailed), failing);
  return dsdat::app::kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank doubling solver for continuous-time algebraic Riccati equations"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Solve a CARE given Matrix Market files");
  solve->add_option("--A", sa.files.A, "state matrix")->required()->check(CLI::ExistingFile);
  solve->add_option("--B", sa.files.B, "input matrix")->required()->check(CLI::ExistingFile);
  solve->add_option("--C", sa.files.C, "output matrix")->required()->check(CLI::ExistingFile);
  solve->add_option("--R", sa.files.R, "input weight (identity if omitted)")
      ->check(CLI::ExistingFile);
  solve->add_option("--config", sa.config_path, "solver config JSON; flags override it")
      ->check(CLI::ExistingFile);
  solve->add_option("--gamma", sa.gamma, "Cayley shift");
  solve->add_option("--trunc-tol", sa.trunc_tol, "truncation tolerance(s), comma separated");
  solve->add_option("--trunc-tol-g", sa.trunc_tol_g, "separate tolerance(s) for the dual side");
  solve->add_option("--res-tol", sa.res_tol, "normalized residual tolerance");
  solve->add_option("--max-iter", sa.max_iter, "maximum number of doubling steps");
  solve->add_option("--stall-steps", sa.stall_steps,
                    "stop after this many steps without residual improvement (0 disables)")
      ->check(CLI::NonNegativeNumber);
  solve->add_option("--out", sa.out, "output directory")->required();
  solve->add_flag("--no-dual", sa.no_dual, "skip the dual residual");

  std::string spec_path, bench_out;
  auto* bench = app.add_subcommand("bench", "Sweep truncation schedules on one problem");
  bench->add_option("--spec", spec_path, "bench spec JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out, "output directory")->required();

  dsdat::app::CheckOptions co;
  std::string fault;
  auto* check = app.add_subcommand("check", "Run the self-check suite on a seeded instance");
  check->add_option("--n", co.n, "instance size")->check(CLI::Range(2, 200));
  check->add_option("--seed", co.seed, "generator seed");
  check->add_option("--k-max", co.k_max, "number of traced doubling steps")->check(CLI::Range(2, 8));
  check->add_flag("--scalar", co.scalar, "run the scalar fixture instead");
  check->add_option("--fault", fault, "inject a fault")->check(CLI::IsMember({"skip-reorth"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dsdat::app::kExitInputError;
  }
  apply_thread_override();

  try {
    if (*solve) return do_solve(sa);
    if (*bench) return do_bench(spec_path, bench_out);
    co.skip_reorthogonalization = fault == "skip-reorth";
    return do_check(co);
  } catch (const dsdat::Error& e) {
    report_error(dsdat::to_string(e.code()), e.what());
    return dsdat::app::exit_code(e.code());
  } catch (const json::exception& e) {
    report_error("ParseError", e.what());
    return dsdat::app::kExitInputError;
  } catch (const std::exception& e) {
    report_error("InternalError", e.what());
    return dsdat::app::kExitNumericalFailure;
  }
}
