#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsdat/app/check.hpp"
#include "dsdat/app/config.hpp"
#include "dsdat/app/run.hpp"
#include "dsdat/matrix_market.hpp"

using namespace dsdat;
using namespace dsdat::app;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("dsdat_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::CheckFailed;
}

// Scalar fixture a = -1, b = c = 1 on disk.
ProblemFiles write_scalar(const TempDir& t) {
  write_text(t.file("A.mtx"), "%%MatrixMarket matrix array real general\n1 1\n-1\n");
  write_text(t.file("B.mtx"), "%%MatrixMarket matrix array real general\n1 1\n1\n");
  write_text(t.file("C.mtx"), "%%MatrixMarket matrix array real general\n1 1\n1\n");
  return {t.file("A.mtx"), t.file("B.mtx"), t.file("C.mtx"), ""};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DSDAT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

// ---- Matrix Market ------------------------------------------------------------

TEST(MatrixMarket, ArrayProblem) {
  TempDir t;
  write_text(t.file("A.mtx"),
             "%%MatrixMarket matrix array real general\n% comment\n2 2\n-1\n0.5\n0\n-2\n");
  write_text(t.file("B.mtx"), "%%MatrixMarket matrix array real general\n2 1\n1\n0\n");
  write_text(t.file("C.mtx"), "%%MatrixMarket matrix array real general\n1 2\n0\n1\n");
  const LoadedProblem lp = load_problem({t.file("A.mtx"), t.file("B.mtx"), t.file("C.mtx"), ""}, 1.0);
  EXPECT_EQ(lp.problem.n(), 2);
  EXPECT_EQ(lp.problem.m(), 1);
  EXPECT_EQ(lp.problem.l(), 1);
  EXPECT_EQ(lp.problem.dense_A()(1, 0), 0.5);  // column-major array order
  EXPECT_EQ(lp.problem.C(0, 1), 1.0);
  EXPECT_NO_THROW(validate_problem(lp.problem));
}

TEST(MatrixMarket, MismatchedInputRows) {
  TempDir t;
  write_text(t.file("A.mtx"), "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 -1\n2 2 -1\n");
  write_text(t.file("B.mtx"), "%%MatrixMarket matrix array real general\n3 1\n1\n0\n0\n");
  write_text(t.file("C.mtx"), "%%MatrixMarket matrix array real general\n1 2\n0\n1\n");
  EXPECT_EQ(code_of([&] {
              load_problem({t.file("A.mtx"), t.file("B.mtx"), t.file("C.mtx"), ""}, 1.0);
            }),
            ErrorCode::DimensionMismatch);
}

TEST(MatrixMarket, SymmetricCoordinateIsExpanded) {
  TempDir t;
  write_text(t.file("A.mtx"),
             "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 -4\n2 1 1\n2 2 -4\n3 2 1\n");
  const mm::MatrixFile f = mm::read_matrix(t.file("A.mtx"));
  EXPECT_TRUE(f.symmetric);
  const Matrix A = f.dense();
  EXPECT_EQ(A(0, 1), 1.0);
  EXPECT_EQ(A(1, 0), 1.0);
  EXPECT_EQ(A(1, 2), 1.0);
  EXPECT_EQ(A(2, 2), 0.0);
  EXPECT_EQ(f.sparse.nonZeros(), 6);
}

TEST(MatrixMarket, Errors) {
  TempDir t;
  write_text(t.file("bad.mtx"), "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n");
  EXPECT_EQ(code_of([&] { mm::read_matrix(t.file("bad.mtx")); }), ErrorCode::ParseError);
  write_text(t.file("short.mtx"), "%%MatrixMarket matrix array real general\n2 2\n1\n2\n");
  EXPECT_EQ(code_of([&] { mm::read_matrix(t.file("short.mtx")); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { mm::read_matrix(t.file("missing.mtx")); }), ErrorCode::IoError);
}

TEST(MatrixMarket, RoundTripIsExact) {
  TempDir t;
  Rng rng(3);
  const Matrix M = rng.normal(5, 3);
  mm::write_array(t.file("M.mtx"), M);
  EXPECT_TRUE(mm::read_matrix(t.file("M.mtx")).dense() == M);
  const SparseMatrix S = M.sparseView();
  mm::write_coordinate(t.file("S.mtx"), S);
  EXPECT_TRUE(mm::read_matrix(t.file("S.mtx")).dense() == M);
  const Vector v = rng.normal(4, 1).col(0);
  mm::write_vector(t.file("v.txt"), v);
  EXPECT_TRUE(mm::read_vector(t.file("v.txt")) == v);
}

// ---- configuration ------------------------------------------------------------

TEST(Config, JsonRoundTripAndUnknownKeys) {
  SolverConfig c;
  c.gamma = 0.25;
  c.trunc_tol = {1e-8, 1e-12};
  c.max_iter = 7;
  c.step.reorthogonalize = false;
  const SolverConfig d = config_from_json(config_to_json(c));
  EXPECT_EQ(normalized_config(c), normalized_config(d));
  EXPECT_EQ(code_of([] { config_from_json(json{{"gama", 1.0}}); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { config_from_json(json{{"gamma", -1.0}}); }), ErrorCode::InvalidArgument);
}

TEST(Config, Schedules) {
  EXPECT_EQ(parse_schedule(json(1e-10)), std::vector<double>{1e-10});
  EXPECT_EQ(parse_schedule_list("1e-6,1e-8").size(), 2u);
  EXPECT_EQ(code_of([] { parse_schedule_list("1e-6,x"); }), ErrorCode::ParseError);
  const std::vector<double> g = parse_schedule(json{{"graded", 2}});
  ASSERT_EQ(g.size(), 20u);
  EXPECT_NEAR(g[0], 1e-8 * 1e-1, 1e-30);
  EXPECT_NEAR(g[2], 1e-8 * 1e-3, 1e-30);
  EXPECT_NEAR(g[19], 1e-8 * 1e-15, 1e-40);
}

// ---- runs ---------------------------------------------------------------------

TEST(RunSolve, ScalarArtifacts) {
  TempDir t;
  const ProblemFiles f = write_scalar(t);
  SolverConfig cfg;
  cfg.gamma = 1.0;
  const LoadedProblem lp = load_problem(f, cfg.gamma);
  const RunArtifact a = run_solve(lp.problem, cfg, lp.info, t.file("out"));
  EXPECT_EQ(a.metadata.at("termination"), "Converged");
  EXPECT_LE(a.metadata.at("iterations").get<int>(), 6);
  EXPECT_LE(a.metadata.at("final_rho_x").get<double>(), 1e-13);
  EXPECT_EQ(a.metadata.at("config").dump(), normalized_config(cfg));

  const json md = json::parse(read_text(t.file("out/metadata.json")));
  EXPECT_EQ(md.at("schema"), kRunSchema);
  std::istringstream csv(read_text(t.file("out/history.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "j,rho_x,rho_y,rank_x,rank_y,seconds,solves");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, md.at("iterations").get<int>());
}

TEST(RunSolve, ReloadedFactorsReproduceResidual) {
  TempDir t;
  const CareProblem p = random_problem(well_conditioned_spec(40, 2, 2, 21), kWellConditionedGamma);
  SolverConfig cfg;
  cfg.gamma = kWellConditionedGamma;
  const RunArtifact a = run_solve(p, cfg, json::object(), t.file("out"));
  const LowRankGram X = load_solution_factor(t.file("out"), "X");
  EXPECT_NEAR(residual_lowrank(p, X).rho, a.metadata.at("final_rho_x").get<double>(), 1e-14);
  const LowRankGram Y = load_solution_factor(t.file("out"), "Y");
  EXPECT_NEAR(residual_dual_lowrank(p, Y).rho, a.metadata.at("final_rho_y").get<double>(), 1e-14);
}

TEST(RunSolve, IterationCapExitCode) {
  TempDir t;
  SolverConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_iter = 1;
  const LoadedProblem lp = load_problem(write_scalar(t), cfg.gamma);
  const RunArtifact a = run_solve(lp.problem, cfg, lp.info, "");
  EXPECT_EQ(a.result.record.termination, Termination::MaxIterations);
  EXPECT_EQ(exit_code(a.result.record.termination), kExitMaxIterations);
  EXPECT_NE(kExitMaxIterations, kExitOk);
}

TEST(RunBench, ScalarSweepIsInsensitiveToTolerance) {
  TempDir t;
  write_scalar(t);
  const json spec = {{"problem", {{"A", "A.mtx"}, {"B", "B.mtx"}, {"C", "C.mtx"}}},
                     {"solver", {{"gamma", 1.0}}},
                     {"schedules", {{{"name", "e6"}, {"trunc_tol", 1e-6}},
                                    {{"name", "e10"}, {"trunc_tol", 1e-10}},
                                    {{"name", "e15"}, {"trunc_tol", 1e-15}},
                                    {{"name", "broken"}, {"trunc_tol", "nope"}}}}};
  const json rep = run_bench(spec, t.file("bench"), t.path());
  ASSERT_EQ(rep.at("rows").size(), 4u);
  EXPECT_TRUE(rep.at("rows")[3].contains("error"));
  std::vector<double> xs;
  for (int i = 0; i < 3; ++i) {
    const LowRankGram X = load_solution_factor(t.file("bench/cell_" + std::to_string(i)));
    xs.push_back(X.dense()(0, 0));
  }
  EXPECT_NEAR(xs[0], xs[2], 1e-10);
  EXPECT_NEAR(xs[1], xs[2], 1e-10);
  EXPECT_NE(bench_table(rep).find("| e15 |"), std::string::npos);
  EXPECT_TRUE(fs::exists(t.file("bench/bench.csv")));
}

TEST(RunBench, RanksGrowAsToleranceShrinks) {
  TempDir t;
  const json spec = {
      {"generator", {{"n", 200}, {"m", 2}, {"l", 2}, {"seed", 1}, {"scale", 1.0},
                     {"min_magnitude", 0.2}, {"eigvec_mix", 0.5}}},
      {"solver", {{"gamma", kWellConditionedGamma}}},
      {"schedules", {{{"trunc_tol", 1e-6}}, {{"trunc_tol", 1e-10}}, {{"trunc_tol", 1e-15}}}}};
  const json rep = run_bench(spec, t.file("bench"));
  const auto& rows = rep.at("rows");
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    EXPECT_LE(rows[i].at("rank_x").get<int>(), rows[i + 1].at("rank_x").get<int>());
    EXPECT_LE(rows[i].at("rank_y").get<int>(), rows[i + 1].at("rank_y").get<int>());
  }
  // Coarse tolerances level the residual off above res_tol; those cells stop
  // on stagnation rather than running to max_iter.
  EXPECT_EQ(rows[0].at("termination"), "Stagnated");
  EXPECT_LT(rows[0].at("iterations").get<int>(), 20);
  EXPECT_LE(rows[2].at("rho_x").get<double>(), 2e-13);
}

// ---- check suite --------------------------------------------------------------

TEST(RunCheck, DefaultSuitePasses) {
  const CheckReport r = run_check({});
  EXPECT_TRUE(r.all_pass()) << ::testing::PrintToString(r.failing());
}

TEST(RunCheck, SkippedReorthogonalizationIsCaught) {
  CheckOptions o;
  o.skip_reorthogonalization = true;
  const CheckReport r = run_check(o);
  EXPECT_FALSE(r.all_pass());
  bool ortho_failed = false;
  for (const auto& name : r.failing()) ortho_failed |= name.find("orthonormality") != std::string::npos;
  EXPECT_TRUE(ortho_failed);
}

TEST(RunCheck, ScalarSuitePasses) {
  CheckOptions o;
  o.scalar = true;
  EXPECT_TRUE(run_check(o).all_pass());
}

// ---- command line -------------------------------------------------------------

TEST(CommandLine, ExitCodes) {
  TempDir t;
  write_scalar(t);
  const std::string files = "--A " + t.file("A.mtx") + " --B " + t.file("B.mtx") + " --C " +
                            t.file("C.mtx");
  EXPECT_EQ(run_cli("solve " + files + " --gamma 1 --trunc-tol 1e-15 --res-tol 1e-13 --max-iter 20 --out " +
                    t.file("ok")),
            0);
  EXPECT_TRUE(fs::exists(t.file("ok/metadata.json")));
  EXPECT_EQ(run_cli("solve " + files + " --gamma 1 --max-iter 1 --out " + t.file("cap")), 2);
  write_text(t.file("bad.mtx"), "not a matrix\n");
  EXPECT_EQ(run_cli("solve --A " + t.file("bad.mtx") + " --B " + t.file("B.mtx") + " --C " +
                    t.file("C.mtx") + " --gamma 1 --out " + t.file("bad")),
            4);
  EXPECT_EQ(run_cli("solve " + files + " --gamma 1 --trunc-tol 1e-6,abc --out " + t.file("x")), 4);
  EXPECT_EQ(run_cli("frobnicate"), 4);
  EXPECT_EQ(run_cli("check --scalar"), 0);
  EXPECT_EQ(run_cli("check --n 12 --seed 3"), 0);
  EXPECT_EQ(run_cli("check --fault skip-reorth"), kExitCheckFailed);
}

TEST(CommandLine, ConfigEchoMatchesInput) {
  TempDir t;
  write_scalar(t);
  SolverConfig c;
  c.gamma = 1.0;
  c.trunc_tol = {1e-12, 1e-15};
  write_text(t.file("cfg.json"), config_to_json(c).dump(2));
  ASSERT_EQ(run_cli("solve --A " + t.file("A.mtx") + " --B " + t.file("B.mtx") + " --C " +
                    t.file("C.mtx") + " --config " + t.file("cfg.json") + " --out " + t.file("o")),
            0);
  const json md = json::parse(read_text(t.file("o/metadata.json")));
  EXPECT_EQ(md.at("config").dump(), normalized_config(c));
}
