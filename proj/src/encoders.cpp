#include "rwfn/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "rwfn/error.hpp"

namespace rwfn {

InsectProjection InsectProjection::build(Rng& rng, std::size_t input_dim, std::size_t hidden,
                                         std::size_t fan_in) {
  require(hidden >= 1, ErrorKind::invalid_argument, "insect projection needs hidden >= 1");
  require(fan_in >= 1 && fan_in <= input_dim, ErrorKind::invalid_argument,
          "insect projection needs 1 <= fan_in <= input_dim (fan_in=" + std::to_string(fan_in) +
              ", input_dim=" + std::to_string(input_dim) + ")");
  InsectProjection p;
  p.input_dim_ = input_dim;
  p.hidden_ = hidden;
  p.fan_in_ = fan_in;
  p.supports_.reserve(hidden * fan_in);
  std::vector<std::uint32_t> pool(input_dim);
  for (std::size_t j = 0; j < hidden; ++j) {
    std::iota(pool.begin(), pool.end(), 0u);
    // Partial Fisher-Yates: the first fan_in slots become a uniform subset.
    for (std::size_t i = 0; i < fan_in; ++i) {
      const std::size_t pick = i + rng.below(input_dim - i);
      std::swap(pool[i], pool[pick]);
    }
    std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(fan_in));
    p.supports_.insert(p.supports_.end(), pool.begin(),
                       pool.begin() + static_cast<std::ptrdiff_t>(fan_in));
  }
  return p;
}

Matrix InsectProjection::mask() const {
  Matrix w(input_dim_, hidden_, 0.0);
  for (std::size_t j = 0; j < hidden_; ++j) {
    for (auto i : support(j)) w(i, j) = 1.0;
  }
  return w;
}

Vector InsectProjection::centered(std::span<const double> v) const {
  require(v.size() == input_dim_, ErrorKind::invalid_argument,
          "insect projection: input has dimension " + std::to_string(v.size()) + ", expected " +
              std::to_string(input_dim_));
  require_finite(v, "insect projection input");
  Vector sums(hidden_, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < hidden_; ++j) {
    double s = 0.0;
    for (auto i : support(j)) s += v[i];
    sums[j] = s;
    total += s;
  }
  const double mean = total / static_cast<double>(hidden_);
  for (auto& s : sums) s -= mean;
  return sums;
}

Vector InsectProjection::forward(std::span<const double> v) const {
  Vector h = centered(v);
  for (auto& x : h) x = std::max(0.0, x);
  return h;
}

FourierProjection FourierProjection::build(Rng& rng, std::size_t input_dim, std::size_t hidden) {
  FourierProjection p;
  p.weights_ = sample_gaussian(rng, input_dim, hidden);
  p.phases_ = sample_uniform(rng, hidden, 0.0, 2.0 * std::numbers::pi);
  return p;
}

Vector FourierProjection::forward(std::span<const double> v) const {
  require(v.size() == input_dim(), ErrorKind::invalid_argument,
          "fourier projection: input has dimension " + std::to_string(v.size()) + ", expected " +
              std::to_string(input_dim()));
  require_finite(v, "fourier projection input");
  Vector h = weights_.transpose_times(v);
  const double scale = std::sqrt(2.0 / static_cast<double>(hidden()));
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = scale * std::cos(h[j] + phases_[j]);
  return h;
}

RandomEncoder::RandomEncoder(std::size_t input_dim, std::size_t hidden, std::size_t fan_in,
                             std::uint64_t seed)
    : seed_(seed) {
  Rng rng(seed);
  insect_ = InsectProjection::build(rng, input_dim, hidden, fan_in);
  fourier_ = FourierProjection::build(rng, input_dim, hidden);
}

Vector RandomEncoder::encode(std::span<const double> v) const {
  const Vector h1 = insect_.forward(v);
  const Vector h2 = fourier_.forward(v);
  Vector h;
  h.reserve(h1.size() + h2.size());
  for (double x : h1) h.push_back(std::tanh(x));
  for (double x : h2) h.push_back(std::tanh(x));
  return h;
}

std::shared_ptr<const RandomEncoder> EncoderRegistry::get_or_create(const EncoderKey& key) {
  std::lock_guard lock(mutex_);
  auto it = encoders_.find(key);
  if (it != encoders_.end()) return it->second;
  auto encoder = std::make_shared<const RandomEncoder>(key.input_dim, key.hidden, key.fan_in, key.seed);
  encoders_.emplace(key, encoder);
  return encoder;
}

std::size_t EncoderRegistry::size() const {
  std::lock_guard lock(mutex_);
  return encoders_.size();
}

std::size_t EncoderRegistry::count(std::size_t arity) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(
      encoders_.begin(), encoders_.end(), [&](const auto& kv) { return kv.first.arity == arity; }));
}

}  // namespace rwfn
