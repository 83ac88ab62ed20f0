#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ssda/checkpoint.hpp"
#include "ssda/config.hpp"
#include "ssda/detector.hpp"
#include "ssda/losses.hpp"
#include "ssda/manifest.hpp"
#include "ssda/metrics.hpp"
#include "ssda/synth.hpp"

namespace ssda {

/// One training sample: the record plus its decoded pixels.
struct TrainSample {
  ImageRecord record;
  Tensor image;
};

/// Load every record's image from disk (data_root / image_id).
std::vector<TrainSample> load_samples(const Manifest& m, const std::string& data_root);
inline TrainSample to_sample(const SynthSample& s) { return TrainSample{s.record, s.image}; }
std::vector<TrainSample> to_samples(const std::vector<SynthSample>& v);

struct PseudoCounters {
  int64_t positive_boxes = 0;
  int64_t positive_images = 0;
  int64_t reliable_background = 0;
  int64_t unusable = 0;
};

struct StepLog {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown parts;
  PseudoCounters counters;
};

struct EpochLog {
  int epoch = 0;
  double mean_total = 0.0;
  double lr_last = 0.0;
  PseudoCounters counters;
  std::optional<double> val_map_50;
  std::optional<double> val_map_50_95;
};

struct TrainHooks {
  /// Called after each optimizer + EMA step with the updated parameters.
  std::function<void(int64_t step, const ParamStore& student, const ParamStore& teacher)>
      after_step;
};

struct TrainResult {
  Checkpoint student;
  std::optional<Checkpoint> teacher;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  PseudoCounters counters;
};

/// Stage 1: supervised training on labeled source data only.
TrainResult train_stage1(const std::vector<TrainSample>& source, const TrainConfig& cfg,
                         const DetectorConfig& det_cfg,
                         const std::vector<TrainSample>* val = nullptr,
                         const std::string& metrics_log_path = "");

/// Stage 2: the semi-supervised protocol. Student starts from the stage-1
/// weights, the teacher starts as a copy; every step composes a labeled +
/// unlabeled batch, the teacher pseudo-labels the raw unlabeled images, the
/// student trains on labeled boxes, masked-image consistency and the
/// domain-adversarial terms, and the teacher follows by EMA.
TrainResult train_stage2(const std::vector<TrainSample>& source_labeled,
                         const std::vector<TrainSample>& target_labeled,
                         const std::vector<TrainSample>& target_unlabeled,
                         const Checkpoint& stage1, const TrainConfig& cfg,
                         const std::vector<TrainSample>* val = nullptr,
                         const std::string& metrics_log_path = "",
                         const TrainHooks* hooks = nullptr);

/// Detections for a whole sample set (image ids filled in).
std::vector<Detection> detect_all(const ParamStore& params, const DetectorConfig& cfg,
                                  const std::vector<TrainSample>& samples);

/// mAP of a parameter set over a validation sample set.
EvalReport evaluate_params(const ParamStore& params, const DetectorConfig& cfg,
                           const std::vector<TrainSample>& val);

/// Per-image supervised detection loss used by both stages; exposed for the
/// gradient-check and overfit probes. Decisions are computed fresh unless
/// `frozen` is given.
struct ImageLossResult {
  double value = 0.0;
  LossBreakdown parts;  // raw per-image components (n_s/n_t unset)
};

}  // namespace ssda
