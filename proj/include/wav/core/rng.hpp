#pragma once

// Splittable, label-addressed random streams.
//
// A SeededStream is an immutable identity: (master seed, path of labels).
// Its 64-bit key is computed by folding FNV-1a-64 hashes of each label into
// the seed with the SplitMix64 finalizer. Draws come from a SplitMix64
// engine started at that key, so a stream always produces the same
// sequence no matter which thread or in which order it is consumed.
//
// Standard normals use the Box-Muller transform on pairs of 53-bit
// uniforms; both outputs of each pair are used in order.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "wav/core/error.hpp"

namespace wav {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// SplitMix64 engine. Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1], safe as a log argument.
  double uniform_open_low() noexcept {
    return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

class SeededStream {
 public:
  explicit SeededStream(std::uint64_t master_seed)
      : master_seed_(master_seed), key_(splitmix64_mix(master_seed)) {}

  SeededStream(std::uint64_t master_seed, const std::vector<std::string>& path)
      : SeededStream(master_seed) {
    for (const auto& label : path) *this = derive(label);
  }

  [[nodiscard]] SeededStream derive(std::string_view label) const {
    require(!label.empty(), "derive_stream: label must be non-empty");
    SeededStream child = *this;
    child.path_.emplace_back(label);
    child.key_ = splitmix64_mix(key_ ^ splitmix64_mix(fnv1a64(label)));
    return child;
  }

  /// Fresh engine positioned at the start of this stream.
  [[nodiscard]] SplitMix64 engine() const noexcept { return SplitMix64(key_); }

  [[nodiscard]] std::uint64_t master_seed() const noexcept { return master_seed_; }
  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] const std::vector<std::string>& path() const noexcept { return path_; }

  [[nodiscard]] std::string path_string() const {
    std::string out;
    for (const auto& label : path_) {
      if (!out.empty()) out += '/';
      out += label;
    }
    return out;
  }

  friend bool operator==(const SeededStream& a, const SeededStream& b) noexcept {
    return a.master_seed_ == b.master_seed_ && a.key_ == b.key_ && a.path_ == b.path_;
  }

 private:
  std::uint64_t master_seed_;
  std::uint64_t key_;
  std::vector<std::string> path_;
};

inline SeededStream derive_stream(const SeededStream& stream, std::string_view label) {
  return stream.derive(label);
}

/// Label helper: indexed("iter", 3) == "iter=3".
inline std::string indexed(std::string_view name, long long index) {
  std::string out(name);
  out += '=';
  out += std::to_string(index);
  return out;
}

}  // namespace wav
