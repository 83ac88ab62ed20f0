#pragma once

#include <cstdint>
#include <string>

#include "ssda/losses.hpp"

namespace ssda {

/// Every training hyperparameter, defaulted to the published configuration:
/// SGD momentum 0.9, weight decay 1e-4, batch 16, 10 epochs, 0.333 warmup
/// epochs, EMA decay 0.9, thresholds 0.8/0.05, 80% unlabeled batch share,
/// 32x32 mask blocks at ratio 0.5, and the loss weights 0.5 / 1e-1 / 2.5e-2
/// / 1e-2 / 2.5e-3 with domain-adaptation rate 2.5e-3.
struct TrainConfig {
  std::string optimizer = "sgd";
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double base_lr = 0.005;
  int batch_size = 16;
  int epochs = 10;
  double warmup_epochs = 0.333;
  double ema_decay = 0.9;
  double tau_u = 0.8;
  double tau_l = 0.05;
  double unlabeled_ratio = 0.8;
  int mask_block = 32;
  double mask_ratio = 0.5;
  double lambda_mask = 0.5;
  double lambda_adv_ins = 1e-1;
  double lambda_adv_img = 2.5e-2;
  double lambda_cons_ins = 1e-2;
  double lambda_cons_img = 2.5e-3;
  double da_rate = 2.5e-3;
  uint64_t seed = 0;

  // schedule details, exposed because no reference pins them:
  // step decay multiplies by lr_decay_factor from 0-based epoch
  // lr_decay_epoch onward; the teacher EMA runs every ema_period steps.
  int lr_decay_epoch = 8;
  double lr_decay_factor = 0.1;
  int ema_period = 1;
  /// global gradient-norm clip; 0 disables
  double clip_grad_norm = 10.0;
  /// false disables the reliable-background path (tau_l filtering still
  /// classifies, but background images are not used as training targets).
  bool use_background_labels = true;

  LossWeights weights() const {
    return LossWeights{lambda_mask, lambda_adv_ins, lambda_adv_img, lambda_cons_ins,
                       lambda_cons_img};
  }
  void validate() const;
};

/// Flat key=value text config; keys are exactly the field names above.
TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);
TrainConfig parse_train_config(const std::string& text);

/// Learning-rate schedule: linear warmup from 0 over the first
/// warmup_epochs-worth of steps, then constant, then stepped down by
/// lr_decay_factor from lr_decay_epoch on.
double lr_schedule(int64_t step, int64_t steps_per_epoch, const TrainConfig& cfg);

}  // namespace ssda
