#pragma once

#include <cstddef>
#include <vector>

#include "hvac/nn/layers.hpp"

namespace hvac::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.0;
};

/// Adam with bias correction. Owns the moment buffers for a fixed parameter
/// list; the parameters themselves stay with the model.
class Adam {
 public:
  Adam(ParamList params, AdamConfig config = {});

  /// Applies one update from the accumulated gradients. Returns the global
  /// gradient norm before clipping.
  double step();
  void zero_grad() { zero_grads(params_); }

  AdamConfig& config() { return config_; }
  long steps() const { return t_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

double global_grad_norm(const ParamList& params);

}  // namespace hvac::nn
