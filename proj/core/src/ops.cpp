#include "hieratt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hieratt/error.hpp"

namespace hieratt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap mmap(Tensor& t, std::size_t rows, std::size_t cols) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(std::string_view op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got shape " + shape_string(t.shape()));
  }
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

std::size_t rows_of(const Tensor& t) { return t.rank() == 2 ? t.dim(0) : 1; }
std::size_t cols_of(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

// Elementwise unary op; `df` gives the local derivative from input x and output y.
template <typename F, typename D>
Var unary(OpKind kind, Var x, F f, D df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  Tensor deriv(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = f(xv[i]);
    deriv[i] = df(xv[i], out[i]);
  }
  const int xi = x.id();
  return x.tape().record(kind, std::move(out), {x}, [xi, deriv = std::move(deriv)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv[i];
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    shape_error("matmul", shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  mmap(out, m, n).noalias() = cmap(av, m, k) * cmap(bv, k, n);
  const int ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::MatMul, std::move(out), {a, b}, [ai, bi, m, k, n](Tape& t, const Tensor& g) {
    auto gm = cmap(g, m, n);
    if (t.requires_grad(ai)) {
      mmap(t.grad_buffer(ai), m, k).noalias() += gm * cmap(t.value(bi), k, n).transpose();
    }
    if (t.requires_grad(bi)) {
      mmap(t.grad_buffer(bi), k, n).noalias() += cmap(t.value(ai), m, k).transpose() * gm;
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const int ai = a.id(), bi = b.id();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    out += bv;
    return a.tape().record(OpKind::Add, std::move(out), {a, b}, [ai, bi](Tape& t, const Tensor& g) {
      t.accumulate(ai, g);
      t.accumulate(bi, g);
    });
  }
  if (bv.rank() == 1 && av.rank() >= 1 && bv.dim(0) == av.shape().back()) {
    const std::size_t cols = bv.dim(0), rows = av.size() / cols;
    Tensor out = av;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
    return a.tape().record(OpKind::Add, std::move(out), {a, b}, [ai, bi, rows, cols](Tape& t, const Tensor& g) {
      t.accumulate(ai, g);
      if (t.requires_grad(bi)) {
        Tensor& gb = t.grad_buffer(bi);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    });
  }
  shape_error("add", shape_string(av.shape()) + " + " + shape_string(bv.shape()));
}

Var sub(Var a, Var b) {
  require_same("sub", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::Sub, std::move(out), {a, b}, [ai, bi](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::Mul, std::move(out), {a, b}, [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same("div", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  const int ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::Div, std::move(out), {a, b}, [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var affine(Var x, double scale, double shift) {
  Tensor out = x.value();
  for (double& v : out.storage()) v = scale * v + shift;
  const int xi = x.id();
  return x.tape().record(OpKind::Affine, std::move(out), {x}, [xi, scale](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
  });
}

Var tanh(Var x) {
  return unary(
      OpKind::Tanh, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      OpKind::Sigmoid, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var elu(Var x) {
  return unary(
      OpKind::Elu, x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double xv, double y) { return xv > 0.0 ? 1.0 : y + 1.0; });
}

Var embedding_lookup(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  require_rank("embedding_lookup", tv, 2);
  if (ids.empty()) shape_error("embedding_lookup", "empty id list");
  const std::size_t vocab = tv.dim(0), width = tv.dim(1);
  Tensor out(Shape{ids.size(), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      shape_error("embedding_lookup",
                  "id " + std::to_string(ids[r]) + " out of range for table " + shape_string(tv.shape()));
    }
    std::copy_n(tv.data().begin() + ids[r] * width, width, out.data().begin() + r * width);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const int ti = table.id();
  return table.tape().record(OpKind::EmbeddingLookup, std::move(out), {table},
                             [ti, idv = std::move(idv), width](Tape& t, const Tensor& g) {
                               Tensor& gt = t.grad_buffer(ti);
                               for (std::size_t r = 0; r < idv.size(); ++r)
                                 for (std::size_t c = 0; c < width; ++c) gt[idv[r] * width + c] += g[r * width + c];
                             });
}

Var dropout(Var x, double rate, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.storage()) m = tape.rng().uniform() >= rate ? keep_scale : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const int xi = x.id();
  return tape.record(OpKind::Dropout, std::move(out), {x}, [xi, mask = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var reshape(Var x, Shape shape) {
  const Tensor& xv = x.value();
  if (shape_size(shape) != xv.size()) shape_error("reshape", shape_string(xv.shape()) + " -> " + shape_string(shape));
  const int xi = x.id();
  return x.tape().record(OpKind::Reshape, xv.reshaped(std::move(shape)), {x}, [xi](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  require_rank("transpose", xv, 2);
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out(Shape{c, r});
  mmap(out, c, r) = cmap(xv, r, c).transpose();
  const int xi = x.id();
  return x.tape().record(OpKind::Transpose, std::move(out), {x}, [xi, r, c](Tape& t, const Tensor& g) {
    mmap(t.grad_buffer(xi), r, c) += cmap(g, c, r).transpose();
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat", "no operands");
  if (axis > 1) shape_error("concat", "axis must be 0 or 1");
  std::vector<Var> inputs(parts.begin(), parts.end());
  const Tensor& first = parts[0].value();
  require_rank("concat", first, 2);
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_rank("concat", v, 2);
    if (v.dim(1 - axis) != first.dim(1 - axis)) {
      shape_error("concat", shape_string(first.shape()) + " with " + shape_string(v.shape()) + " on axis " +
                                std::to_string(axis));
    }
    total += v.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : first.dim(0);
  const std::size_t cols = axis == 1 ? total : first.dim(1);
  Tensor out(Shape{rows, cols});
  std::vector<std::pair<int, std::size_t>> pieces;  // (id, offset along axis)
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t pr = v.dim(0), pc = v.dim(1);
    if (axis == 0) {
      mmap(out, rows, cols).middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(pr)) =
          cmap(v, pr, pc);
    } else {
      mmap(out, rows, cols).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(pc)) =
          cmap(v, pr, pc);
    }
    pieces.emplace_back(p.id(), offset);
    offset += v.dim(axis);
  }
  return parts[0].tape().record(
      OpKind::Concat, std::move(out), std::move(inputs),
      [pieces = std::move(pieces), axis, rows, cols](Tape& t, const Tensor& g) {
        auto gm = cmap(g, rows, cols);
        for (const auto& [id, off] : pieces) {
          if (!t.requires_grad(id)) continue;
          Tensor& gp = t.grad_buffer(id);
          const std::size_t pr = gp.dim(0), pc = gp.dim(1);
          if (axis == 0) {
            mmap(gp, pr, pc) += gm.middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(pr));
          } else {
            mmap(gp, pr, pc) += gm.middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(pc));
          }
        }
      });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank("slice_rows", xv, 2);
  if (begin >= end || end > xv.dim(0)) {
    shape_error("slice_rows", "rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                                  shape_string(xv.shape()));
  }
  const std::size_t cols = xv.dim(1);
  Tensor out(Shape{end - begin, cols},
             Tensor::Storage(xv.data().begin() + begin * cols, xv.data().begin() + end * cols));
  const int xi = x.id();
  return x.tape().record(OpKind::SliceRows, std::move(out), {x}, [xi, begin, cols](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
  });
}

Var pool_mean(Var x) {
  const Tensor& xv = x.value();
  require_rank("pool_mean", xv, 2);
  const std::size_t c = xv.dim(0), s = xv.dim(1);
  Tensor out(Shape{c});
  for (std::size_t i = 0; i < c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s; ++j) acc += xv[i * s + j];
    out[i] = acc / static_cast<double>(s);
  }
  const int xi = x.id();
  return x.tape().record(OpKind::PoolMean, std::move(out), {x}, [xi, c, s](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < s; ++j) gx[i * s + j] += g[i] / static_cast<double>(s);
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const int xi = x.id();
  return x.tape().record(OpKind::Sum, Tensor::scalar(acc), {x}, [xi](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (double& v : gx.storage()) v += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const int xi = x.id();
  return x.tape().record(OpKind::Mean, Tensor::scalar(acc / n), {x}, [xi, n](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (double& v : gx.storage()) v += g[0] / n;
  });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 && xv.rank() != 2) shape_error("softmax", "expected rank 1 or 2, got " + shape_string(xv.shape()));
  const std::size_t rows = rows_of(xv), cols = cols_of(xv);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = softmax_values(xv.data().subspan(r * cols, cols));
    std::copy(row.begin(), row.end(), out.data().begin() + r * cols);
  }
  const int xi = x.id();
  Tensor saved = out;
  return x.tape().record(OpKind::Softmax, std::move(out), {x},
                         [xi, rows, cols, yv = std::move(saved)](Tape& t, const Tensor& g) {
                           Tensor& gx = t.grad_buffer(xi);
                           for (std::size_t r = 0; r < rows; ++r) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * yv[r * cols + c];
                             for (std::size_t c = 0; c < cols; ++c)
                               gx[r * cols + c] += yv[r * cols + c] * (g[r * cols + c] - dot);
                           }
                         });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 && xv.rank() != 2) {
    shape_error("log_softmax", "expected rank 1 or 2, got " + shape_string(xv.shape()));
  }
  const std::size_t rows = rows_of(xv), cols = cols_of(xv);
  Tensor out(xv.shape());
  Tensor probs(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, xv[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(xv[r * cols + c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = xv[r * cols + c] - lse;
      probs[r * cols + c] = std::exp(out[r * cols + c]);
    }
  }
  const int xi = x.id();
  return x.tape().record(OpKind::LogSoftmax, std::move(out), {x},
                         [xi, rows, cols, probs = std::move(probs)](Tape& t, const Tensor& g) {
                           Tensor& gx = t.grad_buffer(xi);
                           for (std::size_t r = 0; r < rows; ++r) {
                             double total = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
                             for (std::size_t c = 0; c < cols; ++c)
                               gx[r * cols + c] += g[r * cols + c] - probs[r * cols + c] * total;
                           }
                         });
}

Var cross_entropy(Var logits, std::span<const int> targets, int pad_id) {
  const Tensor& lv = logits.value();
  require_rank("cross_entropy", lv, 2);
  const std::size_t steps = lv.dim(0), vocab = lv.dim(1);
  if (targets.size() != steps) {
    shape_error("cross_entropy", std::to_string(targets.size()) + " targets for logits " + shape_string(lv.shape()));
  }
  std::size_t count = 0;
  for (int tg : targets) {
    if (tg < 0 || static_cast<std::size_t>(tg) >= vocab) {
      shape_error("cross_entropy", "target " + std::to_string(tg) + " outside vocabulary of " + std::to_string(vocab));
    }
    if (tg != pad_id) ++count;
  }
  if (count == 0) throw Error("cross_entropy: every target is padding (empty reduction)");
  Tensor probs(lv.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < steps; ++r) {
    auto p = softmax_values(lv.data().subspan(r * vocab, vocab));
    std::copy(p.begin(), p.end(), probs.data().begin() + r * vocab);
    if (targets[r] == pad_id) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < vocab; ++c) mx = std::max(mx, lv[r * vocab + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) z += std::exp(lv[r * vocab + c] - mx);
    loss += mx + std::log(z) - lv[r * vocab + targets[r]];
  }
  const double n = static_cast<double>(count);
  std::vector<int> tv(targets.begin(), targets.end());
  const int li = logits.id();
  return logits.tape().record(
      OpKind::CrossEntropy, Tensor::scalar(loss / n), {logits},
      [li, steps, vocab, n, pad_id, tv = std::move(tv), probs = std::move(probs)](Tape& t, const Tensor& g) {
        Tensor& gl = t.grad_buffer(li);
        const double s = g[0] / n;
        for (std::size_t r = 0; r < steps; ++r) {
          if (tv[r] == pad_id) continue;
          for (std::size_t c = 0; c < vocab; ++c) gl[r * vocab + c] += s * probs[r * vocab + c];
          gl[r * vocab + tv[r]] -= s;
        }
      });
}

Var conv1d_causal(Var x, Var kernels, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = kernels.value();
  const Tensor& bv = bias.value();
  require_rank("conv1d_causal", xv, 2);
  require_rank("conv1d_causal", wv, 3);
  const std::size_t cin = xv.dim(0), steps = xv.dim(1);
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != cin || bv.rank() != 1 || bv.dim(0) != cout) {
    shape_error("conv1d_causal", "input " + shape_string(xv.shape()) + ", kernels " + shape_string(wv.shape()) +
                                     ", bias " + shape_string(bv.shape()));
  }
  // cols[(c*K + j), t] = x[c, t - (K-1) + j], zero outside the sequence
  Tensor cols(Shape{cin * k, steps});
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < steps; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
        cols[(c * k + j) * steps + t] = src >= 0 ? xv[c * steps + static_cast<std::size_t>(src)] : 0.0;
      }
  Tensor out(Shape{cout, steps});
  auto om = mmap(out, cout, steps);
  om.noalias() = cmap(wv, cout, cin * k) * cmap(cols, cin * k, steps);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < steps; ++t) out[o * steps + t] += bv[o];
  const int xi = x.id(), wi = kernels.id(), bi = bias.id();
  return x.tape().record(
      OpKind::Conv1dCausal, std::move(out), {x, kernels, bias},
      [xi, wi, bi, cin, cout, k, steps, cols = std::move(cols)](Tape& t, const Tensor& g) {
        auto gm = cmap(g, cout, steps);
        if (t.requires_grad(wi)) {
          mmap(t.grad_buffer(wi), cout, cin * k).noalias() += gm * cmap(cols, cin * k, steps).transpose();
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.grad_buffer(bi);
          for (std::size_t o = 0; o < cout; ++o) gb[o] += gm.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (t.requires_grad(xi)) {
          RowMat dcols = cmap(t.value(wi), cout, cin * k).transpose() * gm;
          Tensor& gx = t.grad_buffer(xi);
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t j = 0; j < k; ++j)
              for (std::size_t s = 0; s < steps; ++s) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(s + j) - static_cast<std::ptrdiff_t>(k - 1);
                if (src >= 0) gx[c * steps + static_cast<std::size_t>(src)] += dcols(c * k + j, s);
              }
        }
      });
}

Var conv2d(Var x, Var kernels, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = kernels.value();
  const Tensor& bv = bias.value();
  require_rank("conv2d", xv, 3);
  require_rank("conv2d", wv, 4);
  const std::size_t cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::size_t cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != cin || bv.rank() != 1 || bv.dim(0) != cout || stride == 0 || h + 2 * padding < kh ||
      w + 2 * padding < kw) {
    shape_error("conv2d", "input " + shape_string(xv.shape()) + ", kernels " + shape_string(wv.shape()) + ", bias " +
                              shape_string(bv.shape()));
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  const std::size_t patch = cin * kh * kw, npos = oh * ow;
  // Each cols row is a (channel, ky, kx) tap; each column an output position.
  Tensor cols(Shape{patch, npos});
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* dst = cols.data().data() + ((c * kh + ky) * kw + kx) * npos;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            dst[oy * ow + ox] = inside ? xv[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)]
                                       : 0.0;
          }
        }
      }
  Tensor out(Shape{cout, oh, ow});
  mmap(out, cout, npos).noalias() = cmap(wv, cout, patch) * cmap(cols, patch, npos);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t p = 0; p < npos; ++p) out[o * npos + p] += bv[o];
  const int xi = x.id(), wi = kernels.id(), bi = bias.id();
  return x.tape().record(
      OpKind::Conv2d, std::move(out), {x, kernels, bias},
      [=, cols = std::move(cols)](Tape& t, const Tensor& g) {
        auto gm = cmap(g, cout, npos);
        if (t.requires_grad(wi)) {
          mmap(t.grad_buffer(wi), cout, patch).noalias() += gm * cmap(cols, patch, npos).transpose();
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.grad_buffer(bi);
          for (std::size_t o = 0; o < cout; ++o) gb[o] += gm.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (t.requires_grad(xi)) {
          RowMat dcols = cmap(t.value(wi), cout, patch).transpose() * gm;
          Tensor& gx = t.grad_buffer(xi);
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* src = dcols.data() + ((c * kh + ky) * kw + kx) * npos;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  const std::ptrdiff_t iy =
                      static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    gx[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += src[oy * ow + ox];
                  }
                }
              }
        }
      });
}

Var outer_add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("outer_add", av, 2);
  require_rank("outer_add", bv, 2);
  if (av.dim(1) != bv.dim(1)) shape_error("outer_add", shape_string(av.shape()) + " with " + shape_string(bv.shape()));
  const std::size_t n = av.dim(0), k = bv.dim(0), d = av.dim(1);
  Tensor out(Shape{n * k, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < d; ++c) out[(i * k + j) * d + c] = av[i * d + c] + bv[j * d + c];
  const int ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::OuterAdd, std::move(out), {a, b}, [ai, bi, n, k, d](Tape& t, const Tensor& g) {
    const bool ga_on = t.requires_grad(ai), gb_on = t.requires_grad(bi);
    Tensor* ga = ga_on ? &t.grad_buffer(ai) : nullptr;
    Tensor* gb = gb_on ? &t.grad_buffer(bi) : nullptr;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t c = 0; c < d; ++c) {
          const double v = g[(i * k + j) * d + c];
          if (ga) (*ga)[i * d + c] += v;
          if (gb) (*gb)[j * d + c] += v;
        }
  });
}

Var gather(Var x, std::span<const std::size_t> flat_indices) {
  const Tensor& xv = x.value();
  if (flat_indices.empty()) shape_error("gather", "empty index list");
  Tensor out(Shape{flat_indices.size()});
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= xv.size()) {
      shape_error("gather", "index " + std::to_string(flat_indices[i]) + " outside " + shape_string(xv.shape()));
    }
    out[i] = xv[flat_indices[i]];
  }
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  const int xi = x.id();
  return x.tape().record(OpKind::Gather, std::move(out), {x}, [xi, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
  });
}

std::vector<double> softmax_values(std::span<const double> v) {
  if (v.empty()) throw DimensionError("softmax: empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (double& o : out) o /= z;
  return out;
}

std::size_t argmax_lowest(std::span<const double> v) {
  if (v.empty()) throw DimensionError("argmax: empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace hieratt
