#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rabbinic {

/// Domain error: bad input file, violated data invariant, infeasible config.
/// The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a caller breaks an operation's precondition (shape mismatch,
/// index that does not point at a mark, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Warnings. Library code never writes to stdout; warnings go through a
// process-wide handler that defaults to stderr.

using WarningHandler = std::function<void(std::string_view)>;

namespace detail {
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
inline WarningHandler& warning_handler() {
  static WarningHandler h = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return h;
}
}  // namespace detail

/// Replaces the warning handler and returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(detail::warning_mutex());
  return std::exchange(detail::warning_handler(), std::move(h));
}

inline void warn(std::string_view msg) {
  std::lock_guard lock(detail::warning_mutex());
  if (detail::warning_handler()) detail::warning_handler()(msg);
}

// ---------------------------------------------------------------------------
// Deterministic randomness. std::*_distribution and std::shuffle are
// implementation-defined, so every draw goes through the helpers below.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a; stable across platforms unlike std::hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for an independent stream keyed by (master seed, label, index).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ stable_hash(label)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed) | 1ULL) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (one draw per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace rabbinic
