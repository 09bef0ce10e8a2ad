#pragma once

#include <cstdint>

#include "repaint/common.hpp"

namespace repaint {

enum class Ablation { Full, RepaintFrozenG, Baseline };

enum class StepKind { DTaskUpdate, GenEncUpdate };

struct TrainConfig {
  int total_epochs = 200;
  double repaint_phase_fraction = 0.75;
  int batch_size = 32;
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.999;
  double task_lr0 = 0.01;
  double task_lr_decay = 0.9;
  int task_lr_decay_epochs = 3;
  double rmsprop_alpha = 0.9;
  Ablation ablation = Ablation::Full;
  double orig_mix_prob = 0.0;  // probability the task sees the original image
  double clip_norm = 10.0;

  void validate() const {
    if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
    if (!(repaint_phase_fraction > 0.0) || repaint_phase_fraction > 1.0)
      throw ConfigError("repaint_phase_fraction must be in (0,1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_g > 0) || !(lr_d > 0) || !(task_lr0 > 0))
      throw ConfigError("learning rates must be > 0");
    if (orig_mix_prob < 0 || orig_mix_prob > 1)
      throw ConfigError("orig_mix_prob must be in [0,1]");
  }
};

// Period-3 alternation: two discriminator+task steps, then one
// generator+encoder step.
inline StepKind schedule_kind(int64_t step) {
  if (step < 0) throw ContractError("schedule_kind: step must be >= 0");
  return step % 3 == 2 ? StepKind::GenEncUpdate : StepKind::DTaskUpdate;
}

// First epoch of the task-only fine-tuning phase.
inline int phase_boundary(const TrainConfig& cfg) {
  return static_cast<int>(
      std::llround(cfg.repaint_phase_fraction * static_cast<double>(cfg.total_epochs)));
}

}  // namespace repaint
