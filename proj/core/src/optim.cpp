#include "lmk/optim.hpp"

#include <cmath>

#include "lmk/errors.hpp"

namespace lmk {

AdamW::AdamW(ParameterStore& params, const AdamWConfig& cfg) : params_(&params), cfg_(cfg) {
  for (const auto& t : params.values()) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void AdamW::step(const Gradients& grads, double lr) {
  if (grads.size() != params_->size()) throw DimensionError("AdamW::step: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = params_->values()[i];
    require_same_shape(p, grads[i], "AdamW::step");
    float* w = p.data();
    const float* g = grads[i].data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * static_cast<double>(g[j]) * g[j];
      if (lr == 0.0) continue;
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      w[j] = static_cast<float>(w[j] - lr * (update + cfg_.weight_decay * w[j]));
    }
  }
}

double learning_rate_at(double lr, double decay, int epoch) { return lr * std::pow(decay, epoch); }

double gradient_norm(const Gradients& grads) {
  double s = 0.0;
  for (const auto& g : grads) {
    for (float v : g.values()) s += static_cast<double>(v) * v;
  }
  return std::sqrt(s);
}

double clip_gradients(Gradients& grads, double max_norm) {
  const double norm = gradient_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto& g : grads) {
      for (float& v : g.values()) v *= scale;
    }
  }
  return norm;
}

}  // namespace lmk
