#pragma once

#include <cstdint>

#include "lmk/netarch.hpp"

namespace lmk {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled: p -= lr * weight_decay * p
};

/// Adam with decoupled weight decay over one parameter store.
class AdamW {
 public:
  AdamW(ParameterStore& params, const AdamWConfig& cfg);

  void step(const Gradients& grads, double lr);
  std::int64_t steps() const { return t_; }

 private:
  ParameterStore* params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

/// lr * decay^epoch.
double learning_rate_at(double lr, double decay, int epoch);

/// Global L2 norm of all gradients.
double gradient_norm(const Gradients& grads);
/// Rescales grads so their global norm is at most max_norm; returns the pre-clip norm.
double clip_gradients(Gradients& grads, double max_norm);

}  // namespace lmk
