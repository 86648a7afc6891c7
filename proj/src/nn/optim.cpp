#include "hvac/nn/optim.hpp"

#include <cmath>

namespace hvac::nn {

double global_grad_norm(const ParamList& params) {
  double s = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data) s += g * g;
  }
  return std::sqrt(s);
}

Adam::Adam(ParamList params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows, p->value.cols);
    v_.emplace_back(p->value.rows, p->value.cols);
  }
}

double Adam::step() {
  const double norm = global_grad_norm(params_);
  double g_scale = 1.0;
  if (config_.max_grad_norm > 0.0 && norm > config_.max_grad_norm) {
    g_scale = config_.max_grad_norm / norm;
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.grad.same_shape(p.value)) {
      throw ShapeError("adam: gradient " + p.grad.shape_string() + " vs parameter " +
                       p.value.shape_string() + " for " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i] * g_scale;
      m_[k].data[i] = b1 * m_[k].data[i] + (1.0 - b1) * g;
      v_[k].data[i] = b2 * v_[k].data[i] + (1.0 - b2) * g * g;
      const double mhat = m_[k].data[i] / c1;
      const double vhat = v_[k].data[i] / c2;
      p.value.data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  return norm;
}

}  // namespace hvac::nn
