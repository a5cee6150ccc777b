#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hieratt/autodiff.hpp"

namespace hieratt {

/// Relative error used by the checkers: |a - n| / max(|a|, |n|, floor).
/// The floor keeps gradients that are zero in exact arithmetic from turning
/// roundoff into O(1) relative error.
inline constexpr double kGradCheckFloor = 1e-6;

double relative_error(double analytic, double numeric);

using OpFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares backward() against central differences for every element of
/// every input. Non-scalar outputs are reduced with fixed pseudo-random
/// weights. Returns the worst relative error.
/// Throws Error when eps lies outside [1e-7, 1e-3]; NoBackwardError when the
/// op graph reaches a node without a backward rule.
double grad_check(const OpFn& op, std::vector<Tensor> inputs, double eps = 1e-5);

/// Same comparison against the parameters of a store. `loss` must build a
/// scalar on the tape it receives. When `samples_per_param` is nonzero only
/// that many elements per parameter (chosen with a fixed seed) are probed.
double grad_check_params(ParamStore& store, const std::function<Var(Tape&)>& loss, double eps = 1e-5,
                         std::size_t samples_per_param = 0);

}  // namespace hieratt
