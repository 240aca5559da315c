#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mbr/core/common.hpp"

namespace mbr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// Deterministic random source. All stochastic behaviour in the toolkit is
// driven through one of these, seeded explicitly, so runs are reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0)
      : gen_(splitmix64(seed)), seed_hash_(splitmix64(seed)) {}

  // Independent substream; depends only on the original seed and `stream`,
  // not on how much the parent has been consumed.
  Rng fork(std::uint64_t stream) const { return Rng(hash_combine(seed_hash_, stream)); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }
  // in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), gen_);
  }

  std::mt19937_64& engine() { return gen_; }

  std::string state() const {
    std::ostringstream os;
    os << seed_hash_ << ' ' << gen_;
    return os.str();
  }
  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> seed_hash_ >> gen_;
    if (!is) fail("bad rng state string");
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_hash_ = 0;
};

}  // namespace mbr
