#pragma once

#include <vector>

#include "json.hpp"

#include "mbr/core/common.hpp"

namespace mbr::train {

// Optimization schedule. Defaults reproduce the reference recipe: 120 epochs
// of Adam at 1e-4 with a 10-epoch linear warm-up and 0.1x steps at epochs
// 40/70/100; architectures with randomly initialized attention blocks first
// run a frozen-trunk alignment phase at a fixed learning rate.
struct FreezePhase {
  bool enabled = false;
  Index epochs = 10;
  double lr = 1e-4;
};

struct TrainPlan {
  Index epochs = 120;
  double base_lr = 1e-4;
  Index warmup_epochs = 10;
  std::vector<Index> decay_epochs = {40, 70, 100};
  double decay_factor = 0.1;
  FreezePhase freeze;
  Index checkpoint_every = 20;  // epochs
  Index log_every = 1;          // iterations

  void validate(bool model_has_random_attention) const {
    if (epochs < 1) fail_validation("plan needs at least one epoch");
    if (base_lr <= 0) fail_validation("base learning rate must be positive");
    if (warmup_epochs < 0 || warmup_epochs > epochs)
      fail_validation("warm-up epochs out of range");
    for (size_t i = 0; i < decay_epochs.size(); ++i) {
      if (decay_epochs[i] < 0 || decay_epochs[i] >= epochs)
        fail_validation("decay epoch ", decay_epochs[i], " outside [0, ", epochs, ")");
      if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])
        fail_validation("decay epochs must be strictly increasing");
    }
    if (freeze.enabled != model_has_random_attention)
      fail_validation(freeze.enabled
                          ? "freeze phase configured but the architecture has no randomly "
                            "initialized attention blocks"
                          : "architectures with attention blocks train in two phases; enable "
                            "the freeze phase (or build from a checkpoint)");
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"base_lr", base_lr},
            {"warmup_epochs", warmup_epochs},
            {"decay_epochs", decay_epochs},
            {"decay_factor", decay_factor},
            {"freeze", {{"enabled", freeze.enabled}, {"epochs", freeze.epochs}, {"lr", freeze.lr}}},
            {"checkpoint_every", checkpoint_every},
            {"log_every", log_every}};
  }
};

// Learning rate for a main-phase epoch: linear ramp from base/warmup to base
// over the warm-up, then base * factor^(decay steps passed).
inline double lr_at(Index epoch, const TrainPlan& plan) {
  MBR_CHECK(epoch >= 0 && epoch < plan.epochs, "epoch ", epoch, " outside the plan");
  if (plan.warmup_epochs > 0 && epoch < plan.warmup_epochs)
    return plan.base_lr * double(epoch + 1) / double(plan.warmup_epochs);
  double lr = plan.base_lr;
  for (Index d : plan.decay_epochs)
    if (epoch >= d) lr *= plan.decay_factor;
  return lr;
}

}  // namespace mbr::train
