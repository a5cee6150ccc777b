#pragma once

#include <string>
#include <vector>

#include "hieratt/tensor.hpp"

namespace hieratt::testing {

// Relevance rows for a laptop scene caption: r1 person, r2 chair, r3 a "don't know" region.
inline Tensor laptop_matrix() {
  return Tensor(Shape{3, 9}, {0.152, 0.579, 0.056, 0.009, 0.006, 0.028, 0.152, 0.001, 0.012,  //
                              0.005, 0.004, 0.953, 0.001, 0.020, 0.001, 0.005, 0.002, 0.003,  //
                              0.111, 0.111, 0.111, 0.111, 0.111, 0.111, 0.111, 0.111, 0.111});
}

inline std::vector<std::string> laptop_words() {
  return {"A", "woman", "sitting", "in", "front", "of", "a", "laptop", "computer"};
}

}  // namespace hieratt::testing
