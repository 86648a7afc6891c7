#include "hvac/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hvac::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult gradcheck(const ParamList& params, const LossFn& loss, double h,
                          std::size_t max_entries) {
  zero_grads(params);
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Tensor> analytic;
  for (const Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&] {
    Tape tape;
    return loss(tape).value().data[0];
  };

  GradCheckResult out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const std::size_t n = p.value.size();
    const std::size_t stride =
        (max_entries == 0 || n <= max_entries) ? 1 : n / max_entries;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + h;
      const double up = eval();
      p.value.data[i] = saved - h;
      const double down = eval();
      p.value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k].size() ? analytic[k].data[i] : 0.0;
      const double err = relative_error(a, numeric);
      ++out.checked;
      if (out.worst_param.empty() || err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst_param = p.name;
        out.worst_index = i;
        out.analytic = a;
        out.numeric = numeric;
      }
    }
  }
  return out;
}

}  // namespace hvac::nn
