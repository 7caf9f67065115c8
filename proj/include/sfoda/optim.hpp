#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sfoda/autodiff.hpp"
#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"

namespace sfoda {

struct SgdConfig {
  double learning_rate = 0.0005;
  double momentum = 0.9;
  double weight_decay = 0.0005;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ContractError("sgd: learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("sgd: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ContractError("sgd: weight_decay must be >= 0");
  }
};

// Classical momentum with weight decay folded into the gradient:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
inline void sgd_update(Matrix& param, const Matrix& grad, Matrix& velocity, const SgdConfig& cfg) {
  if (!param.same_shape(grad) || !param.same_shape(velocity)) {
    throw ContractError("sgd: shape mismatch between parameter " + param.shape_string() +
                        ", gradient " + grad.shape_string() + " and buffer " +
                        velocity.shape_string());
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + cfg.weight_decay * param[i];
    param[i] -= cfg.learning_rate * velocity[i];
  }
}

struct OptimState {
  SgdConfig config;
  std::vector<Matrix> velocity;
  std::size_t step_count = 0;

  explicit OptimState(SgdConfig cfg = {}) : config(cfg) { config.validate(); }
};

// One step over `params`, reading their accumulated gradients. Momentum
// buffers are created on first use and must keep matching shapes.
inline void sgd_step(std::span<ad::Value> params, OptimState& state) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(p.rows(), p.cols());
  }
  if (state.velocity.size() != params.size()) {
    throw ContractError("sgd: optimizer state tracks " + std::to_string(state.velocity.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    sgd_update(params[i].mutable_data(), params[i].grad(), state.velocity[i], state.config);
  ++state.step_count;
}

}  // namespace sfoda
