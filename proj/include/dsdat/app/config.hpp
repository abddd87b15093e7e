#pragma once

// JSON form of the solver configuration and truncation schedules.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsdat/dsda_t.hpp"

namespace dsdat::app {

using json = nlohmann::json;

inline constexpr const char* kRunSchema = "dsdat.run/1";
inline constexpr const char* kBenchSchema = "dsdat.bench/1";

// Per-iteration tolerances 10^{-(2 level + 4)} * max(10^{-i}, 1e-15), i = 1..len.
inline std::vector<double> graded_schedule(int level, int len = 20) {
  std::vector<double> v;
  const double f = std::pow(10.0, -(2.0 * level + 4.0));
  for (int i = 1; i <= len; ++i) v.push_back(f * std::max(std::pow(10.0, -double(i)), 1e-15));
  return v;
}

// Accepts a number, an array of numbers, or {"graded": level}.
inline std::vector<double> parse_schedule(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  if (j.is_array()) {
    std::vector<double> v;
    for (const auto& x : j) {
      if (!x.is_number()) throw Error(ErrorCode::ParseError, "schedule entries must be numbers");
      v.push_back(x.get<double>());
    }
    if (v.empty()) throw Error(ErrorCode::ParseError, "schedule must not be empty");
    return v;
  }
  if (j.is_object() && j.contains("graded")) return graded_schedule(j.at("graded").get<int>());
  throw Error(ErrorCode::ParseError, "schedule must be a number, an array or {\"graded\": k}");
}

inline std::vector<double> parse_schedule_list(const std::string& s) {
  std::vector<double> v;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad tolerance '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return v;
}

inline json config_to_json(const SolverConfig& c) {
  json j;
  j["gamma"] = c.gamma;
  j["trunc_tol"] = c.trunc_tol;
  j["trunc_tol_g"] = c.trunc_tol_g ? json(*c.trunc_tol_g) : json(nullptr);
  j["res_tol"] = c.res_tol;
  j["max_iter"] = c.max_iter;
  j["stall_steps"] = c.stall_steps;
  j["dense_threshold"] = c.dense_threshold;
  j["compute_dual"] = c.compute_dual;
  j["record_history"] = c.record_history;
  j["qr_rank_unit"] = c.step.qr_rank_unit;
  j["basis_drop_tol"] = c.step.basis_drop_tol;
  j["reorthogonalize"] = c.step.reorthogonalize;
  return j;
}

// Missing keys keep their defaults; unknown keys are rejected.
inline SolverConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "solver config must be an object");
  SolverConfig c;
  for (const auto& [key, val] : j.items()) {
    if (key == "gamma") c.gamma = val.get<double>();
    else if (key == "trunc_tol") c.trunc_tol = parse_schedule(val);
    else if (key == "trunc_tol_g") {
      if (val.is_null()) c.trunc_tol_g.reset();
      else c.trunc_tol_g = parse_schedule(val);
    } else if (key == "res_tol") c.res_tol = val.get<double>();
    else if (key == "max_iter") c.max_iter = val.get<int>();
    else if (key == "stall_steps") c.stall_steps = val.get<int>();
    else if (key == "dense_threshold") c.dense_threshold = val.get<Index>();
    else if (key == "compute_dual") c.compute_dual = val.get<bool>();
    else if (key == "record_history") c.record_history = val.get<bool>();
    else if (key == "qr_rank_unit") c.step.qr_rank_unit = val.get<double>();
    else if (key == "basis_drop_tol") c.step.basis_drop_tol = val.get<double>();
    else if (key == "reorthogonalize") c.step.reorthogonalize = val.get<bool>();
    else throw Error(ErrorCode::ParseError, "unknown config key '" + key + "'");
  }
  if (!(c.gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
  if (c.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be at least 1");
  if (c.stall_steps < 0) throw Error(ErrorCode::InvalidArgument, "stall_steps must be nonnegative");
  return c;
}

// Normalized text form: sorted keys, schedules always arrays.
inline std::string normalized_config(const SolverConfig& c) { return config_to_json(c).dump(); }

}  // namespace dsdat::app
