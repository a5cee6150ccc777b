#pragma once

#include <vector>

#include "hieratt/grad_check.hpp"
#include "hieratt/gru.hpp"
#include "hieratt/ops.hpp"

namespace hieratt::testing {

// One entry per differentiable primitive: the op and the shapes of its random inputs.
struct PrimitiveCase {
  const char* name;
  OpFn op;
  std::vector<Shape> shapes;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  static const std::vector<int> ids{2, 0, 1, 2};
  static const std::vector<int> targets{1, 0, 3, 2};
  static const std::vector<std::size_t> flat{0, 5, 3, 3};
  return {
      {"matmul", [](Tape&, std::span<const Var> v) { return matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
      {"add", [](Tape&, std::span<const Var> v) { return add(v[0], v[1]); }, {{3, 4}, {3, 4}}},
      {"add_broadcast", [](Tape&, std::span<const Var> v) { return add(v[0], v[1]); }, {{3, 4}, {4}}},
      {"sub", [](Tape&, std::span<const Var> v) { return sub(v[0], v[1]); }, {{3, 4}, {3, 4}}},
      {"mul", [](Tape&, std::span<const Var> v) { return mul(v[0], v[1]); }, {{3, 4}, {3, 4}}},
      {"div", [](Tape&, std::span<const Var> v) { return div(v[0], affine(mul(v[1], v[1]), 1.0, 0.5)); },
       {{3, 4}, {3, 4}}},
      {"tanh", [](Tape&, std::span<const Var> v) { return tanh(v[0]); }, {{3, 4}}},
      {"sigmoid", [](Tape&, std::span<const Var> v) { return sigmoid(v[0]); }, {{3, 4}}},
      {"elu", [](Tape&, std::span<const Var> v) { return elu(v[0]); }, {{3, 4}}},
      {"embedding_lookup", [](Tape&, std::span<const Var> v) { return embedding_lookup(v[0], ids); }, {{3, 4}}},
      {"dropout", [](Tape&, std::span<const Var> v) { return dropout(v[0], 0.3, true); }, {{3, 4}}},
      {"reshape", [](Tape&, std::span<const Var> v) { return mul(reshape(v[0], {4, 3}), v[1]); }, {{3, 4}, {4, 3}}},
      {"transpose", [](Tape&, std::span<const Var> v) { return mul(transpose(v[0]), v[1]); }, {{3, 4}, {4, 3}}},
      {"concat_rows", [](Tape&, std::span<const Var> v) { return concat(v.subspan(0, 2), 0); }, {{2, 3}, {1, 3}}},
      {"concat_cols", [](Tape&, std::span<const Var> v) { return concat(v.subspan(0, 2), 1); }, {{2, 3}, {2, 2}}},
      {"slice_rows", [](Tape&, std::span<const Var> v) { return slice_rows(v[0], 1, 3); }, {{4, 3}}},
      {"pool_mean", [](Tape&, std::span<const Var> v) { return pool_mean(v[0]); }, {{3, 5}}},
      {"mean", [](Tape&, std::span<const Var> v) { return mean(mul(v[0], v[0])); }, {{3, 5}}},
      {"softmax", [](Tape&, std::span<const Var> v) { return softmax(v[0]); }, {{3, 5}}},
      {"log_softmax", [](Tape&, std::span<const Var> v) { return log_softmax(v[0]); }, {{3, 5}}},
      {"cross_entropy", [](Tape&, std::span<const Var> v) { return cross_entropy(v[0], targets, 0); }, {{4, 5}}},
      {"conv1d_causal", [](Tape&, std::span<const Var> v) { return conv1d_causal(v[0], v[1], v[2]); },
       {{3, 6}, {2, 3, 3}, {2}}},
      {"conv2d", [](Tape&, std::span<const Var> v) { return conv2d(v[0], v[1], v[2], 2, 1); },
       {{2, 6, 6}, {3, 2, 3, 3}, {3}}},
      {"outer_add", [](Tape&, std::span<const Var> v) { return outer_add(v[0], v[1]); }, {{2, 3}, {3, 3}}},
      {"gather", [](Tape&, std::span<const Var> v) { return gather(v[0], flat); }, {{2, 3}}},
      {"gru_cell",
       [](Tape& tape, std::span<const Var> v) {
         GruWeights w{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
         (void)tape;
         return gru_cell(v[0], v[1], w);
       },
       {{2, 3}, {2, 4}, {3, 4}, {3, 4}, {3, 4}, {4, 4}, {4, 4}, {4, 4}, {4}, {4}, {4}}},
  };
}

}  // namespace hieratt::testing
