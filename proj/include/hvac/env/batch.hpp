#pragma once

#include <memory>
#include <span>
#include <vector>

#include "hvac/env/environment.hpp"

namespace hvac::env {

/// One worker slot of a vectorized rollout: the env plus the feedback source
/// and RNG substream it exclusively owns.
struct EnvSlot {
  HvacEnv env;
  std::unique_ptr<FeedbackSource> source;
  Rng feedback_rng;
};

/// Steps every slot once. `out[i]` depends only on slot i, so the serial and
/// OpenMP versions produce identical results regardless of scheduling.
void step_batch_serial(std::span<EnvSlot> slots, std::span<const int> actions,
                       std::span<StepOutcome> out);
void step_batch_parallel(std::span<EnvSlot> slots, std::span<const int> actions,
                         std::span<StepOutcome> out);

}  // namespace hvac::env
