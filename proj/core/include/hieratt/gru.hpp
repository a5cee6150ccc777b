#pragma once

#include <string>

#include "hieratt/autodiff.hpp"

namespace hieratt {

/// Tape handles for one GRU cell. Input matrices are stored [input, hidden]
/// and state matrices [hidden, hidden] so rows of x and h multiply from the left.
struct GruWeights {
  Var w_update, w_reset, w_candidate;
  Var u_update, u_reset, u_candidate;
  Var b_update, b_reset, b_candidate;
};

/// GRU parameters living in a ParamStore.
struct GruParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter* w_update = nullptr;
  Parameter* w_reset = nullptr;
  Parameter* w_candidate = nullptr;
  Parameter* u_update = nullptr;
  Parameter* u_reset = nullptr;
  Parameter* u_candidate = nullptr;
  Parameter* b_update = nullptr;
  Parameter* b_reset = nullptr;
  Parameter* b_candidate = nullptr;

  static GruParams create(ParamStore& store, const std::string& prefix, std::size_t input_size,
                          std::size_t hidden_size, SplitMix64& rng);
  GruWeights bind(Tape& tape) const;
  static std::size_t count(std::size_t input_size, std::size_t hidden_size) {
    return 3 * (input_size * hidden_size + hidden_size * hidden_size + hidden_size);
  }
};

/// One GRU step applied row-wise: x [B, in], h [B, hidden] -> [B, hidden].
///   z  = sigmoid(x Wz + h Uz + bz)
///   r  = sigmoid(x Wr + h Ur + br)
///   h~ = tanh(x Wh + (r * h) Uh + bh)
///   h' = (1 - z) * h + z * h~
Var gru_cell(Var x, Var h, const GruWeights& w);

}  // namespace hieratt
