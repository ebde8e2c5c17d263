#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace ssfo {

// 64-bit FNV-1a, also used for file digests in run manifests.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t state = 0xcbf29ce484222325ull);

// Named-stream seed derivation: hash(seed, stage-name). Adding a new stage
// never perturbs the streams of existing stages.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view stage);

// Deterministic RNG. mt19937_64 has a standard-pinned output sequence; the
// distributions are hand-rolled because std::*_distribution output is
// implementation-defined and would break byte-identical reruns across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng stream(std::uint64_t seed, std::string_view stage) {
    return Rng(stream_seed(seed, stage));
  }

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller, no spare caching
  double next_gaussian();

  // uniform integer in [0, n), rejection-sampled to avoid modulo bias
  std::uint64_t next_below(std::uint64_t n);

  // index drawn from a normalized probability vector by CDF walk
  std::size_t sample_categorical(std::span<const double> probs);

 private:
  std::mt19937_64 gen_;
};

}  // namespace ssfo
