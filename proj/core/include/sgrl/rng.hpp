#pragma once

#include <cstdint>
#include <random>

namespace sgrl {

// splitmix64 finalizer; used to derive decorrelated substream seeds from a
// master seed. derive_seed(s, k) != derive_seed(s, j) for k != j in practice,
// and nearby master seeds give unrelated streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

// Fixed stream ids for the seed-splitting scheme. Every consumer of
// randomness owns a stream derived as derive_seed(master, base + index),
// so adding consumers never shifts the draws seen by existing ones.
namespace stream {
constexpr std::uint64_t kParamInit = 100;
constexpr std::uint64_t kEnvBase = 1000;       // + env index
constexpr std::uint64_t kEnvNoiseBase = 20000; // + env index
constexpr std::uint64_t kCollect = 40000;
constexpr std::uint64_t kShuffle = 40001;
constexpr std::uint64_t kEvalBase = 50000;     // + task id
constexpr std::uint64_t kAnchorBase = 60000;   // + task id
constexpr std::uint64_t kPolicyActBase = 70000;  // + env index; anchor-policy actions
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (stddev == 0.0) return mean;
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen_);
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sgrl
