#include "hieratt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hieratt/error.hpp"
#include "hieratt/ops.hpp"
#include "hieratt/rng.hpp"

namespace hieratt {

namespace {

constexpr std::uint64_t kProjectionSeed = 0x9a7d'c4ec'0000'0001ull;
constexpr std::uint64_t kDropoutSeed = 0x9a7d'c4ec'0000'0002ull;

void check_eps(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw Error("grad_check: eps must lie in [1e-7, 1e-3]");
}

// Scalar reduction of an arbitrary output with weights fixed by shape.
Var project(Var out) {
  if (out.value().size() == 1) return reshape(out, Shape{});
  SplitMix64 rng(kProjectionSeed);
  Tensor w(out.shape());
  for (double& v : w.storage()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(out, out.tape().constant(std::move(w))));
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const OpFn& op, std::vector<Tensor> inputs, double eps) {
  check_eps(eps);
  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    Tape tape(with_grad, kDropoutSeed);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.input(t));
    Var loss = project(op(tape, vars));
    const double value = loss.value().item();
    if (grads) {
      tape.backward(loss);
      for (const Var& v : vars) {
        const Tensor* g = tape.grad(v);
        grads->push_back(g ? *g : Tensor(v.shape()));
      }
    }
    return value;
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double saved = inputs[i][e];
      inputs[i][e] = saved + eps;
      const double plus = evaluate(false, nullptr);
      inputs[i][e] = saved - eps;
      const double minus = evaluate(false, nullptr);
      inputs[i][e] = saved;
      worst = std::max(worst, relative_error(analytic[i][e], (plus - minus) / (2.0 * eps)));
    }
  }
  return worst;
}

double grad_check_params(ParamStore& store, const std::function<Var(Tape&)>& loss, double eps,
                         std::size_t samples_per_param) {
  check_eps(eps);
  store.zero_grad();
  {
    Tape tape(true, kDropoutSeed);
    Var l = loss(tape);
    tape.backward(l);
    tape.accumulate_param_grads();
  }
  auto eval = [&]() {
    Tape tape(false, kDropoutSeed);
    return loss(tape).value().item();
  };
  SplitMix64 rng(kProjectionSeed);
  double worst = 0.0;
  for (auto& p : store) {
    std::vector<std::size_t> idx(p->value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (samples_per_param && samples_per_param < idx.size()) {
      for (std::size_t i = 0; i < samples_per_param; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      }
      idx.resize(samples_per_param);
    }
    for (std::size_t e : idx) {
      const double saved = p->value[e];
      p->value[e] = saved + eps;
      const double plus = eval();
      p->value[e] = saved - eps;
      const double minus = eval();
      p->value[e] = saved;
      worst = std::max(worst, relative_error(p->grad[e], (plus - minus) / (2.0 * eps)));
    }
  }
  store.zero_grad();
  return worst;
}

}  // namespace hieratt
