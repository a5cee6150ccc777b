#include "hieratt/optimizer.hpp"

#include <cmath>

#include "hieratt/error.hpp"

namespace hieratt {

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw Error("adam: learning rate must be positive");
  for (const auto& p : store_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  if (m_.size() != store_.size()) throw Error("adam: parameter store changed after construction");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : store_) {
    auto value = p->value.data();
    auto grad = p->grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
    ++k;
  }
}

double global_grad_norm(const ParamStore& store) {
  double s = 0.0;
  for (const auto& p : store)
    for (double g : p->grad.data()) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = global_grad_norm(store);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : store) p->grad *= scale;
  }
  return norm;
}

}  // namespace hieratt
