#pragma once
// Deterministic random number generation.
//
// Every stochastic choice in the library draws from an Rng instance.  The
// generator is xoshiro256++ seeded through splitmix64, which gives identical
// sequences on every platform independent of the C++ standard library.  An
// Rng's complete state (four 64-bit words plus the cached Box-Muller spare)
// can be serialized, so training can checkpoint and resume mid-epoch with
// bit-identical trajectories.
//
// Independent streams are derived from a master seed and a label via
// derive_stream(seed, label).  Labels keep subsystems decoupled: e.g. the
// weight-init stream of network "G" is the same whether or not a similarity
// network exists, which is what makes reduced training modes bit-comparable.

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>
#include <cmath>

namespace translearn {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// FNV-1a over bytes; used for label hashing and parameter digests.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xCBF29CE484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t hash_label(const std::string& label) {
  return fnv1a(label.data(), label.size());
}

class Rng {
 public:
  Rng() : Rng(0x853C49E6748FEA9Bull) {}

  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int int_range(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the spare value is part of the state.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

  // --- serialization ---------------------------------------------------------
  struct State {
    std::uint64_t s[4];
    bool has_spare;
    double spare;
  };

  State state() const {
    State st;
    std::memcpy(st.s, s_, sizeof(s_));
    st.has_spare = has_spare_;
    st.spare = spare_;
    return st;
  }

  void set_state(const State& st) {
    std::memcpy(s_, st.s, sizeof(s_));
    has_spare_ = st.has_spare;
    spare_ = st.spare;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derive an independent stream from a master seed and a purpose label.
inline Rng derive_stream(std::uint64_t master_seed, const std::string& label) {
  std::uint64_t mix = master_seed ^ (hash_label(label) * 0x9E3779B97F4A7C15ull);
  return Rng(mix);
}

// Derive with an extra integer discriminator (e.g. epoch index).
inline Rng derive_stream(std::uint64_t master_seed, const std::string& label,
                         std::uint64_t index) {
  std::uint64_t mix = master_seed ^ (hash_label(label) * 0x9E3779B97F4A7C15ull);
  mix ^= (index + 1) * 0xD1B54A32D192ED03ull;
  return Rng(mix);
}

}  // namespace translearn
