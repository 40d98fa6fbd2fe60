#pragma once

#include <vector>

#include "fedjets/nn/net.hpp"

namespace fedjets::nn {

struct OptimizerState {
  std::vector<double> velocity;
  double lr = 0.01;
  double momentum = 0.9;

  static OptimizerState for_params(const ParamVector& params, double lr, double momentum);
};

// v <- momentum * v + grad; params <- params - lr * v
void sgdm_step(ParamVector& params, const ParamVector& grad, OptimizerState& opt);

}  // namespace fedjets::nn
