#pragma once

#include "kgst/common.hpp"

namespace kgst {

struct LionConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("lion: learning_rate must be > 0");
    if (beta1 <= 0 || beta1 >= 1) throw ConfigError("lion: beta1 must be in (0,1)");
    if (beta2 <= 0 || beta2 >= 1) throw ConfigError("lion: beta2 must be in (0,1)");
    if (weight_decay < 0) throw ConfigError("lion: weight_decay must be >= 0");
  }
};

// Sign-momentum update:
//   c = beta1 * m + (1 - beta1) * grad
//   param -= lr * (sign(c) + weight_decay * param)
//   m = beta2 * m + (1 - beta2) * grad
// with sign(0) = 0.
void lion_step(Eigen::Ref<Matrix> param, const Eigen::Ref<const Matrix>& grad,
               Eigen::Ref<Matrix> momentum, const LionConfig& config);

}  // namespace kgst
