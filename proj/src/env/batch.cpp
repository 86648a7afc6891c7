#include "hvac/env/batch.hpp"

#include <stdexcept>

namespace hvac::env {

namespace {

void check_sizes(std::span<EnvSlot> slots, std::span<const int> actions,
                 std::span<StepOutcome> out) {
  if (actions.size() != slots.size() || out.size() != slots.size()) {
    throw std::invalid_argument("batch step: slots/actions/out size mismatch");
  }
}

}  // namespace

void step_batch_serial(std::span<EnvSlot> slots, std::span<const int> actions,
                       std::span<StepOutcome> out) {
  check_sizes(slots, actions, out);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    out[i] = slots[i].env.step(actions[i], *slots[i].source,
                               slots[i].feedback_rng);
  }
}

void step_batch_parallel(std::span<EnvSlot> slots, std::span<const int> actions,
                         std::span<StepOutcome> out) {
  check_sizes(slots, actions, out);
  const long n = static_cast<long>(slots.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    try {
      out[i] = slots[i].env.step(actions[i], *slots[i].source,
                                 slots[i].feedback_rng);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace hvac::env
