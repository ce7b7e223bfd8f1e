#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace transnet {

// Deterministic random stream. All sampling goes through the explicit
// helpers below instead of <random> distributions, so a given seed yields
// the same draw sequence on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    return static_cast<int>(uniform() * n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal via Marsaglia polar
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Independent child stream, a pure function of (construction seed, salt).
  // The splitmix64 finalizer keeps consecutive salts decorrelated.
  Rng child(std::uint64_t salt) const {
    std::uint64_t z = seed_ + salt * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Fisher-Yates with our own stream; std::shuffle's draw order is
// implementation defined.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(v[i], v[static_cast<std::size_t>(j)]);
  }
}

}  // namespace transnet
