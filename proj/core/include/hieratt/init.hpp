#pragma once

#include "hieratt/rng.hpp"
#include "hieratt/tensor.hpp"

namespace hieratt {

/// Uniform values in [-bound, bound].
Tensor uniform_tensor(Shape shape, double bound, SplitMix64& rng);
/// Glorot-uniform initialization for a layer with the given fan-in and fan-out.
Tensor glorot_tensor(Shape shape, std::size_t fan_in, std::size_t fan_out, SplitMix64& rng);

}  // namespace hieratt
