#include "fedjets/nn/optim.hpp"

#include "fedjets/error.hpp"

namespace fedjets::nn {

OptimizerState OptimizerState::for_params(const ParamVector& params, double lr, double momentum) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  return OptimizerState{std::vector<double>(params.size(), 0.0), lr, momentum};
}

void sgdm_step(ParamVector& params, const ParamVector& grad, OptimizerState& opt) {
  if (grad.size() != params.size() || opt.velocity.size() != params.size())
    throw ConfigError("sgdm_step: parameter, gradient and velocity lengths differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.velocity[i] = opt.momentum * opt.velocity[i] + grad.values[i];
    params.values[i] -= opt.lr * opt.velocity[i];
  }
}

}  // namespace fedjets::nn
