#pragma once

// Shared vocabulary: the error type, simplex-valued vectors and the
// counter-based random streams used by every stochastic component.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prefer {

enum class ErrorCode {
  invalid_argument,
  parse_error,
  not_found,
  conflict,
  numerical,
  io,
  upstream,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::io: return "io";
    case ErrorCode::upstream: return "upstream";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, const std::string& message,
                    ErrorCode code = ErrorCode::invalid_argument) {
  if (!condition) throw Error(code, message);
}

/// A point on the probability simplex over K aspects.
///
/// Construction through `from_weights` normalizes nonnegative weights;
/// `checked` validates an already-normalized vector. Either way the
/// invariant (nonnegative, sums to one within 1e-9) holds afterwards.
class AspectVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  AspectVector() = default;

  static AspectVector uniform(std::size_t k) {
    require(k >= 1, "aspect vector needs at least one coordinate");
    return AspectVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  static AspectVector one_hot(std::size_t k, std::size_t index) {
    require(index < k, "one-hot index out of range");
    std::vector<double> v(k, 0.0);
    v[index] = 1.0;
    return AspectVector(std::move(v));
  }

  static AspectVector from_weights(std::vector<double> weights) {
    require(!weights.empty(), "aspect vector needs at least one coordinate");
    double total = 0.0;
    for (double w : weights) {
      require(std::isfinite(w) && w >= 0.0,
              "aspect weights must be finite and nonnegative");
      total += w;
    }
    require(total > 0.0, "aspect weights sum to zero", ErrorCode::numerical);
    for (double& w : weights) w /= total;
    return AspectVector(std::move(weights));
  }

  static AspectVector checked(std::vector<double> values) {
    require(!values.empty(), "aspect vector needs at least one coordinate");
    double total = 0.0;
    for (double v : values) {
      require(std::isfinite(v) && v >= 0.0,
              "aspect vector entries must be finite and nonnegative");
      total += v;
    }
    require(std::abs(total - 1.0) <= kSumTolerance,
            "aspect vector does not sum to 1 (sum=" + std::to_string(total) +
                ")");
    return AspectVector(std::move(values));
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }

  double min_coordinate() const {
    return *std::min_element(values_.begin(), values_.end());
  }

  /// Lowest index among the largest entries.
  std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::max_element(values_.begin(), values_.end()) - values_.begin());
  }

  friend bool operator==(const AspectVector&, const AspectVector&) = default;

 private:
  explicit AspectVector(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dimension mismatch: " +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) {
  return std::sqrt(dot(a, a));
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

/// Cosine of two nonzero vectors; throws on a zero vector.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  require(na > 0.0 && nb > 0.0, "cosine of a zero vector is undefined");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Normalized Shannon entropy in [0,1] with 0 log 0 = 0.
inline double normalized_entropy(const AspectVector& p) {
  if (p.size() < 2) return 0.0;
  double h = 0.0;
  for (double v : p.values())
    if (v > 0.0) h -= v * std::log(v);
  return h / std::log(static_cast<double>(p.size()));
}

// ---------------------------------------------------------------------------
// Counter-based random streams. A stream is addressed by a tuple of integers
// (seed, round, step, ...) so any draw can be replayed without carrying
// generator state around.

namespace rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash(std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

/// Uniform in the open interval (0,1).
inline double uniform_open(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

inline double uniform(std::initializer_list<std::uint64_t> keys) noexcept {
  return uniform_open(hash(keys));
}

/// Standard Gumbel(0,1) by inverse CDF.
inline double gumbel(std::initializer_list<std::uint64_t> keys) noexcept {
  return -std::log(-std::log(uniform(keys)));
}

/// Standard normal via Box-Muller on two sub-streams of the same counter.
inline double normal(std::uint64_t key_hash) noexcept {
  const double u1 = uniform_open(splitmix64(key_hash ^ 0x1ULL));
  const double u2 = uniform_open(splitmix64(key_hash ^ 0x2ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential generator over a counter stream, for places that need many
/// draws from one logical stream (initialization, sampling).
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_bits() noexcept { return hash({key_, counter_++}); }
  double next_uniform() noexcept { return uniform_open(next_bits()); }
  double next_normal() noexcept { return normal(next_bits()); }

  /// Uniform integer in [0, n).
  std::size_t next_index(std::size_t n) noexcept {
    return static_cast<std::size_t>(next_uniform() * static_cast<double>(n)) %
           n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rng
}  // namespace prefer
