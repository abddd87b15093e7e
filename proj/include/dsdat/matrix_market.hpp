#pragma once

// Matrix Market reading and writing (real or integer; coordinate or array;
// general or symmetric) and plain-text vectors.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "dsdat/care_core.hpp"

namespace dsdat::mm {

struct MatrixFile {
  SparseMatrix sparse;  ///< always filled, general storage
  bool coordinate = true;
  bool symmetric = false;
  Matrix dense() const { return Matrix(sparse); }
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] inline void parse_fail(const std::string& path, const std::string& why) {
  throw Error(ErrorCode::ParseError, path + ": " + why);
}

inline bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '%') continue;
    return true;
  }
  return false;
}

}  // namespace detail

inline MatrixFile read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) detail::parse_fail(path, "empty file");
  std::istringstream hs(detail::lower(header));
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%matrixmarket" || object != "matrix")
    detail::parse_fail(path, "missing %%MatrixMarket matrix banner");
  if (format != "coordinate" && format != "array")
    detail::parse_fail(path, "unsupported format '" + format + "'");
  if (field != "real" && field != "integer" && field != "double")
    detail::parse_fail(path, "unsupported field '" + field + "' (real data required)");
  if (symmetry != "general" && symmetry != "symmetric")
    detail::parse_fail(path, "unsupported symmetry '" + symmetry + "'");

  MatrixFile out;
  out.coordinate = format == "coordinate";
  out.symmetric = symmetry == "symmetric";
  std::string line;
  if (!detail::next_data_line(in, line)) detail::parse_fail(path, "missing size line");
  std::istringstream ss(line);
  long long rows = -1, cols = -1, nnz = -1;
  ss >> rows >> cols;
  if (out.coordinate) ss >> nnz;
  if (ss.fail() || rows < 0 || cols < 0 || (out.coordinate && nnz < 0))
    detail::parse_fail(path, "bad size line");
  if (out.symmetric && rows != cols) detail::parse_fail(path, "symmetric matrix must be square");

  std::vector<Eigen::Triplet<double>> trip;
  auto add = [&](long long i, long long j, double v) {
    trip.emplace_back(Index(i), Index(j), v);
    if (out.symmetric && i != j) trip.emplace_back(Index(j), Index(i), v);
  };
  if (out.coordinate) {
    trip.reserve(std::size_t(nnz) * (out.symmetric ? 2 : 1));
    for (long long k = 0; k < nnz; ++k) {
      if (!detail::next_data_line(in, line)) detail::parse_fail(path, "too few entries");
      std::istringstream es(line);
      long long i, j;
      double v;
      es >> i >> j >> v;
      if (es.fail() || i < 1 || j < 1 || i > rows || j > cols)
        detail::parse_fail(path, "bad entry line '" + line + "'");
      add(i - 1, j - 1, v);
    }
  } else {
    // Column-major; symmetric arrays list the lower triangle only.
    for (long long j = 0; j < cols; ++j)
      for (long long i = out.symmetric ? j : 0; i < rows; ++i) {
        if (!detail::next_data_line(in, line)) detail::parse_fail(path, "too few entries");
        std::istringstream es(line);
        double v;
        es >> v;
        if (es.fail()) detail::parse_fail(path, "bad value '" + line + "'");
        if (v != 0.0) add(i, j, v);
      }
  }
  out.sparse.resize(Index(rows), Index(cols));
  out.sparse.setFromTriplets(trip.begin(), trip.end());
  out.sparse.makeCompressed();
  return out;
}

inline void write_array(const std::string& path, const Matrix& M) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "%%MatrixMarket matrix array real general\n" << M.rows() << ' ' << M.cols() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index j = 0; j < M.cols(); ++j)
    for (Index i = 0; i < M.rows(); ++i) out << M(i, j) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline void write_coordinate(const std::string& path, const SparseMatrix& S) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "%%MatrixMarket matrix coordinate real general\n"
      << S.rows() << ' ' << S.cols() << ' ' << S.nonZeros() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index k = 0; k < S.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(S, k); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline Vector read_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<double> v;
  std::string line;
  while (detail::next_data_line(in, line)) {
    std::istringstream es(line);
    double x;
    es >> x;
    if (es.fail()) detail::parse_fail(path, "bad value '" + line + "'");
    v.push_back(x);
  }
  return Eigen::Map<Vector>(v.data(), Index(v.size()));
}

inline void write_vector(const std::string& path, const Vector& v) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < v.size(); ++i) out << v(i) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace dsdat::mm
