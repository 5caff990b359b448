#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace ivrl {

// SplitMix64 finalizer. Used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a over the bytes of a name; stable across platforms.
constexpr std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// A seeded random stream.
//
// Children are derived from the stream's *key* (the seed it was built from),
// never from the engine position, so `derive("env")` gives the same child no
// matter how many numbers the parent has already produced. All draws are
// computed from raw 64-bit engine output rather than <random> distributions,
// whose algorithms are implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key = 0) : key_(key), engine_(mix64(key)) {}

  std::uint64_t key() const { return key_; }

  RngStream derive(std::string_view name) const {
    return RngStream(mix64(key_ ^ mix64(hash_name(name))));
  }
  RngStream derive(std::uint64_t index) const {
    return RngStream(mix64(key_ + mix64(index + 0x632BE59BD9B4E019ULL)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform in [0, n), unbiased (rejection sampling). n must be > 0.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return static_cast<std::size_t>(r % bound);
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace ivrl
