#include "hieratt/rng.hpp"

#include <cmath>
#include <initializer_list>
#include <numbers>

namespace hieratt {

double SplitMix64::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  SplitMix64 g(base);
  std::uint64_t s = g();
  for (std::uint64_t tag : {a, b, c}) {
    SplitMix64 h(s ^ (tag * 0xD1B54A32D192ED03ull));
    s = h();
  }
  return s;
}

}  // namespace hieratt
