#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace ken {

// Deterministic random stream. Distributions are hand-rolled on top of the
// raw engine so draws are reproducible independent of the standard library's
// <random> distribution internals.
class RngStream {
 public:
  RngStream() : engine_(0) {}
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Box-Muller without the cached spare, so every draw consumes exactly two
  // engine outputs regardless of call history.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  std::string save_state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

 private:
  std::mt19937_64 engine_;
};

// One master seed fans out to independent named streams (init, dropout,
// shuffle, synth) so e.g. ablation variants share initialization draws.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& stream_name) {
  // FNV-1a over the name, mixed with the master seed via splitmix64.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : stream_name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline RngStream named_stream(std::uint64_t master, const std::string& name) {
  return RngStream(derive_seed(master, name));
}

}  // namespace ken
