#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "rwfn/numeric.hpp"

namespace rwfn {

inline constexpr std::size_t kDefaultFanIn = 7;

// Sparse binary projection: hidden unit j sums a random subset S_j of fan_in
// inputs, the mean over units is subtracted and the result rectified.
class InsectProjection {
 public:
  static InsectProjection build(Rng& rng, std::size_t input_dim, std::size_t hidden,
                                std::size_t fan_in = kDefaultFanIn);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t fan_in() const { return fan_in_; }

  // Input indices feeding hidden unit j, sorted ascending.
  std::span<const std::uint32_t> support(std::size_t j) const {
    return {supports_.data() + j * fan_in_, fan_in_};
  }
  // Dense input_dim x hidden 0/1 matrix W.
  Matrix mask() const;

  // Mean-centred binary-weighted sums, before rectification.
  Vector centered(std::span<const double> v) const;
  Vector forward(std::span<const double> v) const;

  friend bool operator==(const InsectProjection&, const InsectProjection&) = default;

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t fan_in_ = 0;
  std::vector<std::uint32_t> supports_;
};

// Random Fourier features for the unit-bandwidth Gaussian kernel:
// sqrt(2/B) cos(R^T v + b), R ~ N(0,1), b ~ U[0, 2pi).
class FourierProjection {
 public:
  static FourierProjection build(Rng& rng, std::size_t input_dim, std::size_t hidden);

  std::size_t input_dim() const { return weights_.rows(); }
  std::size_t hidden() const { return weights_.cols(); }
  const Matrix& weights() const { return weights_; }
  const Vector& phases() const { return phases_; }

  Vector forward(std::span<const double> v) const;

  friend bool operator==(const FourierProjection&, const FourierProjection&) = default;

 private:
  Matrix weights_;
  Vector phases_;
};

// Frozen encoder h = tanh([insect(v); fourier(v)]), regenerated from its seed.
class RandomEncoder {
 public:
  RandomEncoder(std::size_t input_dim, std::size_t hidden, std::size_t fan_in, std::uint64_t seed);

  std::size_t input_dim() const { return insect_.input_dim(); }
  std::size_t hidden() const { return insect_.hidden(); }
  std::size_t output_dim() const { return 2 * hidden(); }
  std::size_t fan_in() const { return insect_.fan_in(); }
  std::uint64_t seed() const { return seed_; }

  const InsectProjection& insect() const { return insect_; }
  const FourierProjection& fourier() const { return fourier_; }

  Vector encode(std::span<const double> v) const;

  friend bool operator==(const RandomEncoder&, const RandomEncoder&) = default;

 private:
  std::uint64_t seed_;
  InsectProjection insect_;
  FourierProjection fourier_;
};

struct EncoderKey {
  std::size_t arity = 1;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::uint64_t seed = 0;
  std::size_t fan_in = kDefaultFanIn;

  friend auto operator<=>(const EncoderKey&, const EncoderKey&) = default;
};

// Thread-safe cache of shared encoders; one instance per key.
class EncoderRegistry {
 public:
  std::shared_ptr<const RandomEncoder> get_or_create(const EncoderKey& key);

  std::size_t size() const;
  std::size_t count(std::size_t arity) const;

 private:
  mutable std::mutex mutex_;
  std::map<EncoderKey, std::shared_ptr<const RandomEncoder>> encoders_;
};

}  // namespace rwfn
