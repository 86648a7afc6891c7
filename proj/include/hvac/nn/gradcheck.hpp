#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "hvac/nn/layers.hpp"

namespace hvac::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Builds the loss on a fresh tape. Must be a pure function of parameter values.
using LossFn = std::function<Var(Tape&)>;

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central differences over every entry of every parameter (or `max_entries`
/// of them per parameter, evenly spaced, when nonzero).
GradCheckResult gradcheck(const ParamList& params, const LossFn& loss, double h = 1e-5,
                          std::size_t max_entries = 0);

}  // namespace hvac::nn
