#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hedgelab {

// Bad input: malformed configs, out-of-range parameters, shape mismatches.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Something failed while running a valid request (I/O, numerical breakdown).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

using Engine = std::mt19937_64;

// Engine for substream `stream` of base seed `seed`. Distinct (seed, stream)
// pairs give independent-looking streams; the mapping never depends on
// scheduling, so per-index streams keep parallel batches reproducible.
Engine make_engine(std::uint64_t seed, std::uint64_t stream);

// Deterministic 64-bit child seed for (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Runs body(i) for i in [0, n) on up to `workers` threads. Work is split in
// contiguous blocks; callers must write results by index only.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

// Shortest decimal representation that round-trips.
std::string format_double(double value);

// FNV-1a, used for config hashes in manifests and checkpoints.
std::uint64_t fnv1a64(std::string_view bytes);

std::string hex64(std::uint64_t value);

}  // namespace hedgelab
