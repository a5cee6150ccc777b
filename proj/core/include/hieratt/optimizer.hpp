#pragma once

#include <cstdint>
#include <vector>

#include "hieratt/autodiff.hpp"

namespace hieratt {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// Adam with bias correction over every parameter of a store.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg);

  /// One update from the gradients currently in Parameter::grad.
  void step();

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Moment buffers in store order, exposed for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  ParamStore& store_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

double global_grad_norm(const ParamStore& store);
/// Rescales all gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

}  // namespace hieratt
