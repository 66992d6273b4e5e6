#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfsr {

enum class ErrorKind {
  invalid_argument,  // bad shapes, bad flags, violated preconditions
  io,                // filesystem failures
  format,            // unparseable or inconsistent file contents
  numeric,           // NaN/Inf detected where finite values are required
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

namespace detail {
inline void str_append(std::ostringstream&) {}
template <typename A, typename... Rest>
void str_append(std::ostringstream& os, A&& a, Rest&&... rest) {
  os << a;
  str_append(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Args>
std::string str(Args&&... args) {
  std::ostringstream os;
  detail::str_append(os, std::forward<Args>(args)...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail_invalid(Args&&... args) {
  throw Error(ErrorKind::invalid_argument, str(std::forward<Args>(args)...));
}
template <typename... Args>
[[noreturn]] void fail_io(Args&&... args) {
  throw Error(ErrorKind::io, str(std::forward<Args>(args)...));
}
template <typename... Args>
[[noreturn]] void fail_format(Args&&... args) {
  throw Error(ErrorKind::format, str(std::forward<Args>(args)...));
}
template <typename... Args>
[[noreturn]] void fail_numeric(Args&&... args) {
  throw Error(ErrorKind::numeric, str(std::forward<Args>(args)...));
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic RNG with a pinned bit-level sequence (no reliance on
/// standard-library distribution internals). Normal draws use Box-Muller
/// with the cosine/sine pair cached.
class Rng {
public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    // xoshiro256++ state from splitmix64, per the reference initialization
    uint64_t x = seed;
    for (auto& s : s_) {
      x = splitmix64(x);
      s = x;
    }
  }

  uint64_t seed() const { return seed_; }

  /// Independent stream for (seed, index), e.g. one per sampling chain.
  Rng derive(uint64_t stream) const { return Rng(splitmix64(seed_ ^ (0x9e3779b97f4a7c15ull * (stream + 1)))); }

  uint64_t next_u64() {
    auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  /// Standard normal draw.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void fill_normal(std::vector<T>& v) {
    for (auto& x : v) x = T(normal());
  }
  template <typename T>
  void fill_uniform(std::vector<T>& v, double lo, double hi) {
    for (auto& x : v) x = T(uniform(lo, hi));
  }

private:
  uint64_t seed_;
  uint64_t s_[4];
  bool have_cached_ = false;
  double cached_ = 0.0;
};

/// Worker-thread cap: min(LFSR_THREADS, hardware_concurrency), at least 1.
int max_threads();

/// Static-chunked fork-join loop. Each index is processed exactly once and
/// writes must be disjoint across indices; results are then independent of
/// the number of workers.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace lfsr
