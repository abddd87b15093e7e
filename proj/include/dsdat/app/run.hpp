#pragma once

// Problem loading, solve runs with on-disk artifacts, and parameter sweeps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "dsdat/app/config.hpp"
#include "dsdat/dsda_t.hpp"
#include "dsdat/generators.hpp"
#include "dsdat/matrix_market.hpp"
#include "dsdat/residual.hpp"

namespace dsdat::app {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitMaxIterations = 2,
  kExitDiverged = 3,
  kExitInputError = 4,
  kExitNumericalFailure = 5,
};

inline int exit_code(Termination t) {
  switch (t) {
    case Termination::Converged: return kExitOk;
    case Termination::MaxIterations:
    case Termination::Stagnated: return kExitMaxIterations;
    case Termination::Diverged: return kExitDiverged;
    case Termination::NearSingularPencil: return kExitNumericalFailure;
  }
  return kExitNumericalFailure;
}

inline int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InvalidArgument:
    case ErrorCode::RankDeficientB:
    case ErrorCode::RankDeficientC:
    case ErrorCode::WeightNotSPD:
    case ErrorCode::ParseError:
    case ErrorCode::IoError:
    case ErrorCode::DegenerateProblem: return kExitInputError;
    case ErrorCode::MaxIterations: return kExitMaxIterations;
    case ErrorCode::CheckFailed: return kExitCheckFailed;
    default: return kExitNumericalFailure;
  }
}

struct ProblemFiles {
  std::string A, B, C, R;
};

struct LoadedProblem {
  CareProblem problem;
  bool A_symmetric_storage = false;
  json info;
};

inline LoadedProblem load_problem(const ProblemFiles& f, double gamma) {
  LoadedProblem lp;
  const mm::MatrixFile A = mm::read_matrix(f.A);
  const mm::MatrixFile B = mm::read_matrix(f.B);
  const mm::MatrixFile C = mm::read_matrix(f.C);
  CareProblem& p = lp.problem;
  p.A = A.sparse;
  p.B = B.dense();
  p.C = C.dense();
  p.R = f.R.empty() ? Matrix::Identity(p.B.cols(), p.B.cols()) : mm::read_matrix(f.R).dense();
  p.gamma = gamma;
  check_dimensions(p);
  lp.A_symmetric_storage = A.symmetric;
  lp.info = {{"n", p.n()},
             {"m", p.m()},
             {"l", p.l()},
             {"nnz_A", p.A.nonZeros()},
             {"A_symmetric_storage", A.symmetric},
             {"files", {{"A", f.A}, {"B", f.B}, {"C", f.C}, {"R", f.R}}}};
  return lp;
}

// Apply DSDAT_DENSE_THRESHOLD if set.
inline void apply_env_overrides(SolverConfig& c) {
  if (const char* v = std::getenv("DSDAT_DENSE_THRESHOLD")) {
    try {
      c.dense_threshold = std::stol(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "DSDAT_DENSE_THRESHOLD is not an integer");
    }
  }
}

inline json history_json(const RunRecord& r) {
  json h = json::array();
  for (const auto& it : r.history)
    h.push_back({{"j", it.j},
                 {"rho_x", it.rho_x},
                 {"rho_y", std::isfinite(it.rho_y) ? json(it.rho_y) : json(nullptr)},
                 {"rank_x", it.rank_x},
                 {"rank_y", it.rank_y},
                 {"increment", std::isfinite(it.increment) ? json(it.increment) : json(nullptr)},
                 {"seconds", it.seconds},
                 {"solves", it.solves}});
  return h;
}

inline void write_history_csv(const std::string& path, const RunRecord& r) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "j,rho_x,rho_y,rank_x,rank_y,seconds,solves\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& it : r.history)
    out << it.j << ',' << it.rho_x << ',' << it.rho_y << ',' << it.rank_x << ',' << it.rank_y
        << ',' << it.seconds << ',' << it.solves << '\n';
}

struct RunArtifact {
  SolveResult result;
  json metadata;
  std::string dir;
};

inline json run_metadata(const SolveResult& res, const SolverConfig& cfg, const json& problem) {
  const RunRecord& r = res.record;
  json md;
  md["schema"] = kRunSchema;
  md["generator_version"] = kGeneratorVersion;
  md["config"] = config_to_json(cfg);
  md["problem"] = problem;
  md["termination"] = to_string(r.termination);
  md["message"] = r.message;
  md["iterations"] = r.iterations;
  md["final_rho_x"] = r.final_rho_x;
  md["final_rho_y"] = std::isfinite(r.final_rho_y) ? json(r.final_rho_y) : json(nullptr);
  md["rank_x"] = res.X.rank();
  md["rank_y"] = res.Y.rank();
  md["total_solves"] = r.total_solves;
  md["total_seconds"] = r.total_seconds;
  md["history"] = history_json(r);
  md["files"] = {{"X_Q", "X_Q.mtx"}, {"X_d", "X_d.txt"}, {"Y_Q", "Y_Q.mtx"}, {"Y_d", "Y_d.txt"},
                 {"history", "history.csv"}};
  md["factor_scale"] = res.X.scale;
  return md;
}

inline void write_artifact(const std::string& dir, const SolveResult& res, const json& md) {
  fs::create_directories(dir);
  mm::write_array((fs::path(dir) / "X_Q.mtx").string(), res.X.Q);
  mm::write_vector((fs::path(dir) / "X_d.txt").string(), res.X.d);
  mm::write_array((fs::path(dir) / "Y_Q.mtx").string(), res.Y.Q);
  mm::write_vector((fs::path(dir) / "Y_d.txt").string(), res.Y.d);
  write_history_csv((fs::path(dir) / "history.csv").string(), res.record);
  std::ofstream out(fs::path(dir) / "metadata.json");
  if (!out) throw Error(ErrorCode::IoError, "cannot write metadata in " + dir);
  out << md.dump(2) << '\n';
}

inline RunArtifact run_solve(const CareProblem& p, const SolverConfig& cfg, const json& problem_info,
                             const std::string& out_dir) {
  RunArtifact a;
  a.result = solve(p, cfg);
  a.metadata = run_metadata(a.result, cfg, problem_info);
  a.dir = out_dir;
  if (!out_dir.empty()) write_artifact(out_dir, a.result, a.metadata);
  return a;
}

// Reloads the X factor of a run directory.
inline LowRankGram load_solution_factor(const std::string& dir, const std::string& which = "X") {
  std::ifstream in(fs::path(dir) / "metadata.json");
  if (!in) throw Error(ErrorCode::IoError, "no metadata.json in " + dir);
  const json md = json::parse(in);
  LowRankGram g;
  g.Q = mm::read_matrix((fs::path(dir) / (which + "_Q.mtx")).string()).dense();
  g.d = mm::read_vector((fs::path(dir) / (which + "_d.txt")).string());
  g.scale = md.at("factor_scale").get<double>();
  if (g.Q.cols() != g.d.size())
    throw Error(ErrorCode::DimensionMismatch, "factor and weight lengths differ");
  return g;
}

// Bench spec:
// {
//   "problem": {"A": path, "B": path, "C": path, "R": path}   or
//   "generator": {"n":..,"m":..,"l":..,"seed":..,"stable":..,...},
//   "solver": {...base config...},
//   "schedules": [{"name": "...", "trunc_tol": number | array | {"graded": k}}, ...]
// }
inline CareProblem bench_problem(const json& spec, double gamma, json& info,
                                 const fs::path& base) {
  if (spec.contains("problem")) {
    const json& pj = spec.at("problem");
    auto path_of = [&](const char* k) -> std::string {
      if (!pj.contains(k)) return {};
      fs::path pth = pj.at(k).get<std::string>();
      return (pth.is_relative() ? base / pth : pth).string();
    };
    LoadedProblem lp = load_problem({path_of("A"), path_of("B"), path_of("C"), path_of("R")}, gamma);
    info = lp.info;
    return lp.problem;
  }
  if (spec.contains("generator")) {
    const json& g = spec.at("generator");
    RandomSpec rs;
    rs.n = g.value("n", rs.n);
    rs.m = g.value("m", rs.m);
    rs.l = g.value("l", rs.l);
    rs.seed = g.value("seed", rs.seed);
    rs.stable = g.value("stable", rs.stable);
    rs.n_negative = g.value("n_negative", rs.n_negative);
    rs.scale = g.value("scale", rs.scale);
    rs.min_magnitude = g.value("min_magnitude", rs.min_magnitude);
    rs.eigvec_mix = g.value("eigvec_mix", rs.eigvec_mix);
    info = {{"generator", g}, {"generator_version", kGeneratorVersion}, {"n", rs.n},
            {"m", rs.m}, {"l", rs.l}};
    return random_problem(rs, gamma);
  }
  throw Error(ErrorCode::ParseError, "bench spec needs \"problem\" or \"generator\"");
}

struct BenchRow {
  std::string name;
  bool ok = false;
  std::string error;
  SolveResult result;
};

inline json run_bench(const json& spec, const std::string& out_dir, const fs::path& base = {}) {
  SolverConfig base_cfg = spec.contains("solver") ? config_from_json(spec.at("solver")) : SolverConfig{};
  apply_env_overrides(base_cfg);
  json info;
  const CareProblem p = bench_problem(spec, base_cfg.gamma, info, base);
  if (!spec.contains("schedules") || !spec.at("schedules").is_array())
    throw Error(ErrorCode::ParseError, "bench spec needs a \"schedules\" array");
  json report;
  report["schema"] = kBenchSchema;
  report["problem"] = info;
  report["rows"] = json::array();
  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "bench.csv");
  csv << "name,rho_x,rho_y,rank_x,rank_y,iterations,etime,solves,termination\n";
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);
  int idx = 0;
  for (const auto& sch : spec.at("schedules")) {
    SolverConfig cfg = base_cfg;
    const std::string name = sch.value("name", "cell" + std::to_string(idx));
    json row = {{"name", name}};
    try {
      cfg.trunc_tol = parse_schedule(sch.at("trunc_tol"));
      if (sch.contains("trunc_tol_g")) cfg.trunc_tol_g = parse_schedule(sch.at("trunc_tol_g"));
      const std::string cell_dir = (fs::path(out_dir) / ("cell_" + std::to_string(idx))).string();
      RunArtifact a = run_solve(p, cfg, info, cell_dir);
      const RunRecord& r = a.result.record;
      row["rho_x"] = r.final_rho_x;
      row["rho_y"] = std::isfinite(r.final_rho_y) ? json(r.final_rho_y) : json(nullptr);
      row["rank_x"] = a.result.X.rank();
      row["rank_y"] = a.result.Y.rank();
      row["iterations"] = r.iterations;
      row["etime"] = r.total_seconds;
      row["solves"] = r.total_solves;
      row["termination"] = to_string(r.termination);
      row["dir"] = cell_dir;
      csv << name << ',' << r.final_rho_x << ',' << r.final_rho_y << ',' << a.result.X.rank()
          << ',' << a.result.Y.rank() << ',' << r.iterations << ',' << r.total_seconds << ','
          << r.total_solves << ',' << to_string(r.termination) << '\n';
    } catch (const std::exception& e) {
      row["error"] = e.what();
      csv << name << ",,,,,,,," << "error" << '\n';
    }
    report["rows"].push_back(row);
    ++idx;
  }
  std::ofstream(fs::path(out_dir) / "bench.json") << report.dump(2) << '\n';
  return report;
}

inline std::string bench_table(const json& report) {
  std::ostringstream os;
  os << "| schedule | rho_x | rho_y | rank_x | rank_y | iterations | eTime (s) |\n"
     << "|---|---|---|---|---|---|---|\n";
  os << std::setprecision(6);
  for (const auto& r : report.at("rows")) {
    os << "| " << r.at("name").get<std::string>() << " | ";
    if (r.contains("error")) {
      os << "error: " << r.at("error").get<std::string>() << " | | | | | |\n";
      continue;
    }
    auto num = [&](const char* k) {
      std::ostringstream s;
      s << std::setprecision(6);
      if (r.at(k).is_null()) s << "-";
      else s << r.at(k).get<double>();
      return s.str();
    };
    os << num("rho_x") << " | " << num("rho_y") << " | " << r.at("rank_x") << " | "
       << r.at("rank_y") << " | " << r.at("iterations") << " | " << num("etime") << " |\n";
  }
  return os.str();
}

}  // namespace dsdat::app
