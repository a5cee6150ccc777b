#pragma once

#include "hieratt/rng.hpp"
#include "hieratt/tensor.hpp"

namespace hieratt::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  SplitMix64 rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace hieratt::testing
