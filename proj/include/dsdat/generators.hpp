#pragma once

// Seeded random CARE instances. Draws come from mt19937_64 (fully specified
// by the standard) through a fixed uniform mapping and Box-Muller, so a seed
// reproduces the same matrices on every platform.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "dsdat/care_core.hpp"

namespace dsdat {

inline constexpr int kGeneratorVersion = 1;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in (0, 1).
  double uniform() { return (double(eng_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform(), u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    spare_ = rad * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return rad * std::cos(2.0 * std::numbers::pi * u2);
  }

  Matrix normal(Index rows, Index cols) {
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) M(i, j) = normal();
    return M;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct RandomSpec {
  Index n = 20;
  Index m = 2;
  Index l = 2;
  std::uint64_t seed = 1;
  // When true all eigenvalues of A are negative; otherwise n_negative of them
  // are negative and the rest positive.
  bool stable = true;
  Index n_negative = 3;
  double scale = 0.01;
  // Eigenvalue magnitudes are drawn uniformly from (min_magnitude, 1).
  double min_magnitude = 0.0;
  // Eigenvector matrix: a standard Gaussian matrix when negative, otherwise
  // I + eigvec_mix * N / sqrt(n) (closer to normal for small mix).
  double eigvec_mix = -1.0;
};

// A = scale * X diag(lambda) X^{-1}, B and C standard Gaussian.
inline CareProblem random_problem(const RandomSpec& spec, double gamma) {
  Rng rng(spec.seed);
  const Index n = spec.n;
  Vector lam(n);
  const Index nneg = spec.stable ? n : std::min(spec.n_negative, n);
  for (Index i = 0; i < n; ++i) {
    const double mag = spec.min_magnitude + (1.0 - spec.min_magnitude) * rng.uniform();
    lam(i) = (i < n - nneg) ? mag : -mag;
  }
  Matrix X = rng.normal(n, n);
  if (spec.eigvec_mix >= 0.0)
    X = Matrix::Identity(n, n) + (spec.eigvec_mix / std::sqrt(double(n))) * X;
  Eigen::PartialPivLU<Matrix> lu(X);
  const Matrix A = spec.scale * X * lam.asDiagonal() * lu.inverse();
  const Matrix B = rng.normal(n, spec.m);
  const Matrix C = rng.normal(spec.l, n);
  return CareProblem::from_dense(A, B, C, gamma);
}

}  // namespace dsdat

namespace dsdat {

// Stable instances with well-separated eigenvalues and a mildly non-normal
// eigenvector matrix; the coupled and decoupled dense recursions agree to
// near working precision on these, which makes them suitable for identity
// checks. Pair with kWellConditionedGamma.
inline constexpr double kWellConditionedGamma = 0.3;

inline RandomSpec well_conditioned_spec(Index n, Index m, Index l, std::uint64_t seed) {
  RandomSpec s;
  s.n = n;
  s.m = m;
  s.l = l;
  s.seed = seed;
  s.stable = true;
  s.scale = 1.0;
  s.min_magnitude = 0.2;
  s.eigvec_mix = 0.5;
  return s;
}

}  // namespace dsdat
