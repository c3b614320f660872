#include "rwfn/numeric.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "rwfn/error.hpp"

namespace rwfn {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require(std::isfinite(fill), ErrorKind::invalid_argument, "matrix fill must be finite");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorKind::invalid_argument,
          "matrix data length " + std::to_string(data_.size()) + " != " +
              std::to_string(rows) + "x" + std::to_string(cols));
  require_finite(data_, "matrix");
}

Vector Matrix::transpose_times(std::span<const double> x) const {
  require(x.size() == rows_, ErrorKind::invalid_argument, "transpose_times: dimension mismatch");
  Vector y(cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row_ptr = data_.data() + r * cols_;
    for (std::size_t c = 0; c < cols_; ++c) y[c] += row_ptr[c] * xr;
  }
  return y;
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  require(n > 0, ErrorKind::invalid_argument, "Rng::below requires n > 0");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t state = base ^ (tag * 0xd1b54a32d192ed03ULL);
  splitmix64(state);
  return splitmix64(state);
}

Matrix sample_gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
  require(rows >= 1 && cols >= 1, ErrorKind::invalid_argument,
          "sample_gaussian: dimensions must be >= 1");
  std::vector<double> data(rows * cols);
  for (auto& x : data) x = rng.normal();
  return Matrix(rows, cols, std::move(data));
}

Vector sample_uniform(Rng& rng, std::size_t dim, double lo, double hi) {
  require(std::isfinite(lo) && std::isfinite(hi), ErrorKind::invalid_argument,
          "sample_uniform: bounds must be finite");
  require(lo < hi, ErrorKind::invalid_argument, "sample_uniform: requires lo < hi");
  Vector out(dim);
  for (auto& x : out) x = rng.uniform(lo, hi);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::invalid_argument, "dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return s;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::invalid_argument,
           std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

double grad_check(const ScalarFunction& f, std::span<const double> analytic_gradient,
                  std::span<const double> theta, double eps) {
  require(eps > 0.0, ErrorKind::invalid_argument, "grad_check: eps must be positive");
  require(analytic_gradient.size() == theta.size(), ErrorKind::invalid_argument,
          "grad_check: gradient and parameter sizes differ");
  require_finite(theta, "grad_check theta");
  require_finite(analytic_gradient, "grad_check gradient");

  std::vector<double> probe(theta.begin(), theta.end());
  const auto eval = [&]() {
    const double value = f(probe);
    if (!std::isfinite(value)) fail(ErrorKind::numeric, "grad_check: function value is not finite");
    return value;
  };
  eval();

  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + eps;
    const double plus = eval();
    probe[i] = original - eps;
    const double minus = eval();
    probe[i] = original;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double analytic = analytic_gradient[i];
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace rwfn
