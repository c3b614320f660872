#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rwfn {

using Vector = std::vector<double>;

// Dense row-major matrix. Entries are always finite.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> data() const noexcept { return data_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  // y = M^T x, x has length rows().
  Vector transpose_times(std::span<const double> x) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// xoshiro256** seeded through splitmix64. All samplers below are built on
// integer operations plus std::log/std::cos/std::sqrt so streams do not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; one value per two uniforms.
  double normal();
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

// Derives an independent 64-bit seed from a base seed and a stream tag.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag);

Matrix sample_gaussian(Rng& rng, std::size_t rows, std::size_t cols);
Vector sample_uniform(Rng& rng, std::size_t dim, double lo, double hi);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double sigmoid(double x);

void require_finite(std::span<const double> values, const char* what);

using ScalarFunction = std::function<double(std::span<const double>)>;

inline constexpr double kDefaultGradCheckStep = 1e-5;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const ScalarFunction& f, std::span<const double> analytic_gradient,
                  std::span<const double> theta, double eps = kDefaultGradCheckStep);

}  // namespace rwfn
