#pragma once

// Philox4x32-10 counter-based generator with keyed stream splitting.
//
// A stream is identified by a 64-bit key. Child streams are derived with
// `split(tag, index)`, which hashes (key, tag, index) through the SplitMix64
// finalizer; the counter of a fresh stream starts at zero. Every experiment
// draws from named children of one root seed:
//
//   root(seed).split("features", i)   node features of instance i
//   root(seed).split("graph/<dist>", i) edges of instance i
//   root(seed).split("teacher", 0)    teacher readout
//   root(seed).split("init", run)     parameter init
//   root(seed).split("shuffle", run)  mini-batch order, dropout masks
//
// so any single instance can be regenerated without replaying the others.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace structfit {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : key_(splitmix64(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  [[nodiscard]] Rng split(std::string_view tag, std::uint64_t index = 0) const {
    Rng child;
    child.key_ = splitmix64(key_ ^ splitmix64(hash_tag(tag) + splitmix64(index)));
    return child;
  }

  [[nodiscard]] std::uint64_t key() const { return key_; }

  result_type operator()() {
    if (lane_ == 2) refill();
    return buffer_[lane_++];
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  void refill() {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                     static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
    std::array<std::uint32_t, 2> k{static_cast<std::uint32_t>(key_),
                                   static_cast<std::uint32_t>(key_ >> 32)};
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    buffer_[0] = (std::uint64_t{ctr[0]} << 32) | ctr[1];
    buffer_[1] = (std::uint64_t{ctr[2]} << 32) | ctr[3];
    ++counter_;
    lane_ = 0;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int lane_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace structfit
