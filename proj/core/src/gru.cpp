#include "hieratt/gru.hpp"

#include "hieratt/error.hpp"
#include "hieratt/init.hpp"
#include "hieratt/ops.hpp"

namespace hieratt {

GruParams GruParams::create(ParamStore& store, const std::string& prefix, std::size_t input_size,
                            std::size_t hidden_size, SplitMix64& rng) {
  GruParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  auto in_mat = [&](const char* name) {
    return &store.add(prefix + "." + name, glorot_tensor({input_size, hidden_size}, input_size, hidden_size, rng));
  };
  auto state_mat = [&](const char* name) {
    return &store.add(prefix + "." + name, glorot_tensor({hidden_size, hidden_size}, hidden_size, hidden_size, rng));
  };
  auto bias = [&](const char* name) { return &store.add(prefix + "." + name, Tensor(Shape{hidden_size})); };
  p.w_update = in_mat("w_update");
  p.w_reset = in_mat("w_reset");
  p.w_candidate = in_mat("w_candidate");
  p.u_update = state_mat("u_update");
  p.u_reset = state_mat("u_reset");
  p.u_candidate = state_mat("u_candidate");
  p.b_update = bias("b_update");
  p.b_reset = bias("b_reset");
  p.b_candidate = bias("b_candidate");
  return p;
}

GruWeights GruParams::bind(Tape& tape) const {
  return GruWeights{tape.param(*w_update), tape.param(*w_reset), tape.param(*w_candidate),
                    tape.param(*u_update), tape.param(*u_reset), tape.param(*u_candidate),
                    tape.param(*b_update), tape.param(*b_reset), tape.param(*b_candidate)};
}

Var gru_cell(Var x, Var h, const GruWeights& w) {
  const Tensor& xv = x.value();
  const Tensor& hv = h.value();
  const Tensor& wz = w.w_update.value();
  if (xv.rank() != 2 || hv.rank() != 2 || xv.dim(0) != hv.dim(0) || wz.rank() != 2 || wz.dim(0) != xv.dim(1) ||
      wz.dim(1) != hv.dim(1)) {
    throw DimensionError("gru_cell: input " + shape_string(xv.shape()) + ", state " + shape_string(hv.shape()) +
                         ", w_update " + shape_string(wz.shape()));
  }
  Var z = sigmoid(add(add(matmul(x, w.w_update), matmul(h, w.u_update)), w.b_update));
  Var r = sigmoid(add(add(matmul(x, w.w_reset), matmul(h, w.u_reset)), w.b_reset));
  Var cand = tanh(add(add(matmul(x, w.w_candidate), matmul(mul(r, h), w.u_candidate)), w.b_candidate));
  // (1 - z) * h + z * cand  ==  h + z * (cand - h)
  return add(h, mul(z, sub(cand, h)));
}

}  // namespace hieratt
