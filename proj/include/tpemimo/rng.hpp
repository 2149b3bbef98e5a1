#pragma once

// Seeded substreams: every random quantity in the project is drawn from a
// stream addressed by (master seed, purpose tag, up to three indices), so any
// sample/trial can be regenerated independently of execution order or worker
// count.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace tpemimo {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct StreamKey {
  std::uint64_t master = 0;
  std::string tag;
  std::uint64_t i0 = 0, i1 = 0, i2 = 0;

  std::uint64_t seed() const {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ fnv1a64(tag));
    h = splitmix64(h ^ i0);
    h = splitmix64(h ^ i1);
    h = splitmix64(h ^ i2);
    return h;
  }
};

// mt19937_64 with hand-rolled uniform/normal draws. The standard library's
// distributions are implementation-defined, so they cannot back a
// reproducibility contract; these can.
class Substream {
 public:
  explicit Substream(const StreamKey& key) : eng_(key.seed()), key_(key) {}
  Substream(std::uint64_t master, std::string_view tag, std::uint64_t i0 = 0,
            std::uint64_t i1 = 0, std::uint64_t i2 = 0)
      : Substream(StreamKey{master, std::string(tag), i0, i1, i2}) {}

  const StreamKey& key() const { return key_; }

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0, 1)
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1]
  double uniform01_open_low() {
    return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
  }

  // standard normal via Box-Muller, second draw cached
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform01_open_low();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double stddev) { return stddev * normal(); }

 private:
  std::mt19937_64 eng_;
  StreamKey key_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

inline Substream substream(std::uint64_t master, std::string_view tag,
                           std::uint64_t i0 = 0, std::uint64_t i1 = 0,
                           std::uint64_t i2 = 0) {
  return Substream(master, tag, i0, i1, i2);
}

}  // namespace tpemimo
