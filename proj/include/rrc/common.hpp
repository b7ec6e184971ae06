#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rrc {

using LinkId = std::size_t;
using NodeId = std::size_t;

inline constexpr std::size_t kNone = static_cast<std::size_t>(-1);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A link refers to a node (or link) that does not exist, or the graph is unusable.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Ragged or mismatched attribute vectors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Arguments that violate a documented precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed (singular system, non-convergence, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The model cannot be evaluated at the requested parameter point. Objective
/// wrappers translate this into a log-likelihood of -infinity.
class InfeasibleParameters : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// splitmix64 finalizer; used to derive independent per-item RNG streams
// from a base seed so results do not depend on thread scheduling.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from a 64-bit engine, identical on every platform.
template <typename Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is assigned in
/// contiguous blocks; callers write into per-index slots and reduce afterwards
/// in index order, so results are independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, threads > 1 ? static_cast<std::size_t>(threads) : 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace rrc
