#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace sdlab {

// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// hash(seed, purpose, index...). All randomness in the project flows
// through this so that no two purposes share a stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  return mix64(seed ^ mix64(hash_name(purpose)));
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                    std::uint64_t index, Rest... rest) {
  return derive_seed(mix64(derive_seed(seed, purpose) + mix64(index + 1)), purpose,
                     static_cast<std::uint64_t>(rest)...);
}

using Engine = std::mt19937_64;

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Box-Muller on top of mt19937_64. std::normal_distribution is not
// specified bit-for-bit across standard libraries, this is.
class Gaussian {
 public:
  double operator()(Engine& eng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(eng);
    double u2 = uniform01(eng);
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sdlab
