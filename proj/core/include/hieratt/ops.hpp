#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hieratt/autodiff.hpp"

namespace hieratt {

// Differentiable primitives. Every function validates operand shapes and
// throws DimensionError naming the op and the offending shapes.

Var matmul(Var a, Var b);
/// Same-shape add, or row-broadcast when `b` is rank-1 with the trailing extent of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// scale * x + shift, elementwise.
Var affine(Var x, double scale, double shift = 0.0);
Var tanh(Var x);
Var sigmoid(Var x);
/// ELU with alpha = 1.
Var elu(Var x);
/// Rows of `table` selected by `ids`; result is [ids.size(), table.cols].
Var embedding_lookup(Var table, std::span<const int> ids);
/// Inverted dropout. Identity when `training` is false; mask drawn from the tape's RNG.
Var dropout(Var x, double rate, bool training);
Var reshape(Var x, Shape shape);
Var transpose(Var x);
/// Concatenation of rank-2 operands along `axis` (0 = rows, 1 = columns).
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
/// Mean over the trailing axis of a rank-2 tensor: [C, S] -> [C].
Var pool_mean(Var x);
Var sum(Var x);
Var mean(Var x);
/// Softmax over the trailing axis (rank 1 or 2), max-subtracted.
Var softmax(Var x);
Var log_softmax(Var x);
/// Mean token cross-entropy over non-pad targets. logits: [T, V].
Var cross_entropy(Var logits, std::span<const int> targets, int pad_id);
/// x: [C_in, T], kernels: [C_out, C_in, K], bias: [C_out]. Left zero-pad of K-1.
Var conv1d_causal(Var x, Var kernels, Var bias);
/// x: [C, H, W], kernels: [O, C, k, k], bias: [O]. Symmetric zero padding.
Var conv2d(Var x, Var kernels, Var bias, std::size_t stride, std::size_t padding);
/// a: [n, d], b: [k, d] -> [n*k, d] with row i*k+j = a_i + b_j.
Var outer_add(Var a, Var b);
/// Flat-index gather into a rank-1 result.
Var gather(Var x, std::span<const std::size_t> flat_indices);

// Value-level helpers shared with non-differentiable callers.

/// Stable softmax of a vector. Throws DimensionError on empty input.
std::vector<double> softmax_values(std::span<const double> v);
/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax_lowest(std::span<const double> v);

}  // namespace hieratt
