#include "kgst/lion.hpp"

namespace kgst {

void lion_step(Eigen::Ref<Matrix> param, const Eigen::Ref<const Matrix>& grad,
               Eigen::Ref<Matrix> momentum, const LionConfig& config) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols() ||
      param.rows() != momentum.rows() || param.cols() != momentum.cols()) {
    throw ContractError("lion_step: parameter/gradient/momentum shape mismatch");
  }
  const Matrix c = config.beta1 * momentum + (1.0 - config.beta1) * grad;
  param -= config.learning_rate *
           (c.array().sign().matrix() + config.weight_decay * param);
  momentum = config.beta2 * momentum + (1.0 - config.beta2) * grad;
}

}  // namespace kgst
