#pragma once

#include <cstdint>
#include <random>

namespace rfslam {

// SplitMix64 finalizer, used for seed derivation and key hashing.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Random stream with the draw helpers the samplers need.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Key into a tree of independent random streams. Children are derived by
/// hashing, so sub-streams can be created in any order (or concurrently)
/// without affecting one another; a run is reproducible from its root seed
/// alone.
class StreamKey {
 public:
  explicit StreamKey(std::uint64_t root) : state_(splitmix64(root)) {}

  StreamKey child(std::uint64_t tag) const {
    return StreamKey(Raw{}, splitmix64(state_ ^ (tag + 0x9E3779B97F4A7C15ull)));
  }
  StreamKey child(std::uint64_t a, std::uint64_t b) const { return child(a).child(b); }
  StreamKey child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return child(a).child(b).child(c);
  }

  Rng stream() const { return Rng(splitmix64(state_)); }

 private:
  struct Raw {};
  StreamKey(Raw, std::uint64_t state) : state_(state) {}
  std::uint64_t state_;
};

// Tags naming the purpose of each derived stream.
enum StreamTag : std::uint64_t {
  kStreamData = 1,
  kStreamInit,
  kStreamStep,
  kStreamPredictAgent,
  kStreamPredictNoise,
  kStreamPredictFeature,
  kStreamBirth,
  kStreamResampleAgent,
  kStreamResampleFeature,
  kStreamResampleNoise,
  kStreamRun,
};

}  // namespace rfslam
