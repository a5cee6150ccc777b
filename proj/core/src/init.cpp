#include "hieratt/init.hpp"

#include <cmath>

namespace hieratt {

Tensor uniform_tensor(Shape shape, double bound, SplitMix64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor glorot_tensor(Shape shape, std::size_t fan_in, std::size_t fan_out, SplitMix64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor(std::move(shape), bound, rng);
}

}  // namespace hieratt
