#pragma once

#include <optional>
#include <vector>

#include "ssda/detector.hpp"
#include "ssda/geometry.hpp"
#include "ssda/rng.hpp"
#include "ssda/tape.hpp"

namespace ssda {

struct LossWeights {
  double lambda_mask = 0.5;
  double lambda_adv_ins = 1e-1;
  double lambda_adv_img = 2.5e-2;
  double lambda_cons_ins = 1e-2;
  double lambda_cons_img = 2.5e-3;
};

/// Per-step loss components: raw sums over the batch, before the objective's
/// normalizations. `total` is exactly what combine() returns for them.
struct LossBreakdown {
  double l_s = 0.0;
  double l_m = 0.0;
  double l_a_img = 0.0;
  double l_a_ins = 0.0;
  double l_c_img = 0.0;
  double l_c_ins = 0.0;
  int n_s = 0;
  int n_t = 0;
  double total = 0.0;
};

/// The composite objective: supervised term over the N_s labeled samples,
/// masked-consistency term over the N_t unlabeled samples, adversarial and
/// consistency terms over all N_s + N_t. Component inputs are batch sums.
/// The arithmetic here is the single source of truth: the training tape
/// reproduces it operation for operation, so logged totals recompute exactly.
double total_loss(const LossBreakdown& parts, const LossWeights& w, int n_s, int n_t);

/// Tape twin of total_loss over scalar component nodes (pass -1 for an
/// absent component, which must then have a zero-count denominator).
int total_loss_node(Tape& tape, int l_s, int l_m, int l_a_ins, int l_a_img, int l_c_ins,
                    int l_c_img, const LossWeights& w, int n_s, int n_t);

/// Frozen per-level RPN training targets.
struct RpnLevelTargets {
  std::vector<int64_t> sampled_indices;  // flat indices into the {A,h,w} objectness map
  Tensor objectness;                     // 0/1 target per sampled index
  std::vector<int64_t> reg_indices;      // flat indices into the {4A,h,w} delta map
  Tensor reg_targets;                    // encoded deltas, 4 per positive anchor
};

/// Frozen ROI training sample.
struct RoiTrainSample {
  BBox roi;
  int cls_label = 0;  // in [0, num_classes], num_classes = background
  bool has_reg = false;
  std::array<double, 4> reg_target{0, 0, 0, 0};
};

/// All discrete decisions of one detection-loss evaluation (anchor samples,
/// roi samples). Computing them once and reusing them keeps the remaining
/// loss a smooth function of the parameters, which is what the finite-
/// difference checks require.
struct DetDecisions {
  std::vector<RpnLevelTargets> rpn;
  std::vector<RoiTrainSample> rois;
};

/// Assign anchor and roi targets for one image given proposals from the
/// current forward pass. Deterministic under rng state.
DetDecisions make_detection_decisions(const Tape& tape, const ForwardNodes& fwd,
                                      const DetectorConfig& cfg, const std::vector<BBox>& gt_boxes,
                                      const std::vector<Proposal>& proposals, int img_w, int img_h,
                                      Rng& rng);

/// Scalar loss nodes of one image's detection loss.
struct DetLossNodes {
  int total = -1;
  int rpn_obj = -1;
  int rpn_reg = -1;
  int roi_cls = -1;
  int roi_reg = -1;
  std::vector<int> roi_fc;  // hidden roi features, reused by the instance discriminator
};

/// Build the differentiable detection loss for frozen decisions.
DetLossNodes build_detection_loss(Tape& tape, const BoundParams& params, const DetectorConfig& cfg,
                                  const ForwardNodes& fwd, const DetDecisions& decisions);

/// Adversarial + consistency scalars for one image's discriminator outputs.
/// domain_is_target selects the binary target of the adversarial BCE.
struct DomainLossNodes {
  int adv_img = -1;
  int adv_ins = -1;
  int cons_img = -1;
  int cons_ins = -1;
};

DomainLossNodes build_domain_losses(Tape& tape, const DomainLogits& logits, bool domain_is_target);

}  // namespace ssda
