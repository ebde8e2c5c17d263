#include "ssfo/rng.hpp"

#include <cmath>
#include <numbers>

#include "ssfo/errors.hpp"

namespace ssfo {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state) {
  constexpr std::uint64_t prime = 0x100000001b3ull;
  for (unsigned char b : bytes) {
    state ^= b;
    state *= prime;
  }
  return state;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view stage) {
  unsigned char seed_bytes[8];
  for (int i = 0; i < 8; ++i) {
    seed_bytes[i] = static_cast<unsigned char>((seed >> (8 * i)) & 0xff);
  }
  std::uint64_t h = fnv1a64(std::span<const unsigned char>(seed_bytes, 8));
  h = fnv1a64(std::span<const unsigned char>(
                  reinterpret_cast<const unsigned char*>(stage.data()), stage.size()),
              h);
  return h;
}

double Rng::next_gaussian() {
  // u1 in (0, 1] so the log is finite
  double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) {
    throw precondition_error("next_below: n must be positive");
  }
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) {
    x = next_u64();
  }
  return x % n;
}

std::size_t Rng::sample_categorical(std::span<const double> probs) {
  if (probs.empty()) {
    throw precondition_error("sample_categorical: empty probability vector");
  }
  double total = 0.0;
  for (double p : probs) {
    total += p;
  }
  const double u = next_double() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) {
      return i;
    }
  }
  return probs.size() - 1;  // rounding fell past the end
}

}  // namespace ssfo
