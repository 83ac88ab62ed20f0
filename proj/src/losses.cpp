#include "ssda/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ssda/error.hpp"

namespace ssda {

double total_loss(const LossBreakdown& parts, const LossWeights& w, int n_s, int n_t) {
  if (n_s < 0 || n_t < 0) throw ConfigError("negative sample count");
  double total = 0.0;
  if (n_s > 0) {
    total += (1.0 / n_s) * parts.l_s;
  } else if (parts.l_s != 0.0) {
    throw ConfigError("supervised loss present but N_s = 0");
  }
  if (n_t > 0) {
    total += (1.0 / n_t) * (w.lambda_mask * parts.l_m);
  } else if (parts.l_m != 0.0) {
    throw ConfigError("masked-consistency loss present but N_t = 0");
  }
  if (n_s + n_t > 0) {
    total += (1.0 / (n_s + n_t)) *
             (w.lambda_adv_ins * parts.l_a_ins + w.lambda_adv_img * parts.l_a_img +
              w.lambda_cons_ins * parts.l_c_ins + w.lambda_cons_img * parts.l_c_img);
  } else if (parts.l_a_ins != 0.0 || parts.l_a_img != 0.0 || parts.l_c_ins != 0.0 ||
             parts.l_c_img != 0.0) {
    throw ConfigError("domain losses present but N_s + N_t = 0");
  }
  return total;
}

int total_loss_node(Tape& tape, int l_s, int l_m, int l_a_ins, int l_a_img, int l_c_ins,
                    int l_c_img, const LossWeights& w, int n_s, int n_t) {
  // Mirrors total_loss() operation for operation so that recomputing the
  // objective from logged component sums reproduces the tape value exactly.
  std::vector<int> terms;
  if (n_s > 0 && l_s >= 0) {
    terms.push_back(tape.scale(l_s, 1.0 / n_s));
  }
  if (n_t > 0 && l_m >= 0) {
    terms.push_back(tape.scale(tape.scale(l_m, w.lambda_mask), 1.0 / n_t));
  }
  if (n_s + n_t > 0) {
    std::vector<std::pair<int, double>> weighted;
    if (l_a_ins >= 0) weighted.emplace_back(l_a_ins, w.lambda_adv_ins);
    if (l_a_img >= 0) weighted.emplace_back(l_a_img, w.lambda_adv_img);
    if (l_c_ins >= 0) weighted.emplace_back(l_c_ins, w.lambda_cons_ins);
    if (l_c_img >= 0) weighted.emplace_back(l_c_img, w.lambda_cons_img);
    if (!weighted.empty()) {
      terms.push_back(tape.scale(tape.wsum(weighted), 1.0 / (n_s + n_t)));
    }
  }
  if (terms.empty()) return tape.constant(Tensor::scalar(0.0));
  return tape.sum_list(terms);
}

namespace {

constexpr double kSmoothL1Beta = 1.0;

struct AnchorMatch {
  double best_iou = 0.0;
  int best_gt = -1;
};

}  // namespace

DetDecisions make_detection_decisions(const Tape& tape, const ForwardNodes& fwd,
                                      const DetectorConfig& cfg, const std::vector<BBox>& gt_boxes,
                                      const std::vector<Proposal>& proposals, int img_w, int img_h,
                                      Rng& rng) {
  DetDecisions out;
  const int levels = cfg.num_levels();
  out.rpn.resize(static_cast<size_t>(levels));

  // Per-level anchors and their IoU against every ground-truth box.
  std::vector<std::vector<BBox>> anchors(static_cast<size_t>(levels));
  std::vector<std::vector<AnchorMatch>> matches(static_cast<size_t>(levels));
  struct GlobalBest {
    double iou = 0.0;
    int level = -1;
    int64_t flat = -1;
  };
  std::vector<GlobalBest> best_for_gt(gt_boxes.size());

  for (int l = 0; l < levels; ++l) {
    const Tensor& obj = tape.value(fwd.rpn_obj[static_cast<size_t>(l)]);
    anchors[l] = make_anchors(cfg, l, obj.dim(1), obj.dim(2));
    matches[l].resize(anchors[l].size());
    for (size_t a = 0; a < anchors[l].size(); ++a) {
      for (size_t g = 0; g < gt_boxes.size(); ++g) {
        const double v = iou(anchors[l][a], gt_boxes[g]);
        if (v > matches[l][a].best_iou) {
          matches[l][a].best_iou = v;
          matches[l][a].best_gt = static_cast<int>(g);
        }
        if (v > best_for_gt[g].iou) {
          best_for_gt[g] = GlobalBest{v, l, static_cast<int64_t>(a)};
        }
      }
    }
  }

  struct Cand {
    int level;
    int64_t flat;
    int gt = -1;
  };
  std::vector<Cand> pos, neg;
  for (int l = 0; l < levels; ++l) {
    for (size_t a = 0; a < anchors[l].size(); ++a) {
      const AnchorMatch& m = matches[l][a];
      if (!gt_boxes.empty() && m.best_iou >= cfg.rpn_pos_iou) {
        pos.push_back(Cand{l, static_cast<int64_t>(a), m.best_gt});
      } else if (m.best_iou < cfg.rpn_neg_iou) {
        neg.push_back(Cand{l, static_cast<int64_t>(a)});
      }
    }
  }
  // every ground truth recruits its best-matching anchor
  for (size_t g = 0; g < gt_boxes.size(); ++g) {
    const GlobalBest& b = best_for_gt[g];
    if (b.level < 0) continue;
    bool already = false;
    for (const Cand& c : pos) {
      if (c.level == b.level && c.flat == b.flat) {
        already = true;
        break;
      }
    }
    if (!already) pos.push_back(Cand{b.level, b.flat, static_cast<int>(g)});
  }

  const size_t want_pos = static_cast<size_t>(cfg.rpn_sample_count) / 2;
  std::vector<size_t> pos_pick = rng.sample_without_replacement(pos.size(), std::min(pos.size(), want_pos));
  const size_t want_neg = static_cast<size_t>(cfg.rpn_sample_count) - pos_pick.size();
  std::vector<size_t> neg_pick = rng.sample_without_replacement(neg.size(), std::min(neg.size(), want_neg));
  std::sort(pos_pick.begin(), pos_pick.end());
  std::sort(neg_pick.begin(), neg_pick.end());

  std::vector<std::vector<std::pair<int64_t, double>>> obj_targets(static_cast<size_t>(levels));
  for (size_t pi : pos_pick) {
    const Cand& c = pos[pi];
    obj_targets[static_cast<size_t>(c.level)].emplace_back(c.flat, 1.0);
    const Tensor& obj = tape.value(fwd.rpn_obj[static_cast<size_t>(c.level)]);
    const int fh = obj.dim(1), fw = obj.dim(2);
    const int64_t cell = c.flat % (static_cast<int64_t>(fh) * fw);
    const int64_t a_idx = c.flat / (static_cast<int64_t>(fh) * fw);
    const auto deltas = encode_box(anchors[c.level][static_cast<size_t>(c.flat)],
                                   gt_boxes[static_cast<size_t>(c.gt)]);
    RpnLevelTargets& t = out.rpn[static_cast<size_t>(c.level)];
    for (int k = 0; k < 4; ++k) {
      t.reg_indices.push_back((a_idx * 4 + k) * fh * fw + cell);
      t.reg_targets.data.push_back(deltas[static_cast<size_t>(k)]);
    }
  }
  for (size_t ni : neg_pick) {
    const Cand& c = neg[ni];
    obj_targets[static_cast<size_t>(c.level)].emplace_back(c.flat, 0.0);
  }
  for (int l = 0; l < levels; ++l) {
    RpnLevelTargets& t = out.rpn[static_cast<size_t>(l)];
    for (const auto& [flat, target] : obj_targets[static_cast<size_t>(l)]) {
      t.sampled_indices.push_back(flat);
      t.objectness.data.push_back(target);
    }
    t.objectness.shape = {static_cast<int>(t.objectness.data.size())};
    t.reg_targets.shape = {static_cast<int>(t.reg_targets.data.size())};
  }

  // ROI samples: proposals plus the ground truth itself.
  std::vector<BBox> cands;
  for (const Proposal& p : proposals) cands.push_back(p.box);
  for (const BBox& g : gt_boxes) cands.push_back(clamp_to_image(g, img_w, img_h));

  std::vector<RoiTrainSample> fg, bg;
  for (const BBox& c : cands) {
    if (c.w < 1.0 || c.h < 1.0) continue;
    double best = 0.0;
    int best_g = -1;
    for (size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = iou(c, gt_boxes[g]);
      if (v > best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    RoiTrainSample s;
    s.roi = c;
    if (best_g >= 0 && best >= cfg.roi_fg_iou) {
      s.cls_label = gt_boxes[static_cast<size_t>(best_g)].class_id;
      s.has_reg = true;
      s.reg_target = encode_box(c, gt_boxes[static_cast<size_t>(best_g)]);
      fg.push_back(std::move(s));
    } else {
      s.cls_label = cfg.num_classes;
      bg.push_back(std::move(s));
    }
  }
  const size_t want_fg =
      std::min(fg.size(), static_cast<size_t>(std::floor(cfg.roi_sample_count * cfg.roi_fg_fraction + 0.5)));
  const size_t want_bg = std::min(bg.size(), static_cast<size_t>(cfg.roi_sample_count) - want_fg);
  for (size_t i : rng.sample_without_replacement(fg.size(), want_fg)) out.rois.push_back(fg[i]);
  for (size_t i : rng.sample_without_replacement(bg.size(), want_bg)) out.rois.push_back(bg[i]);
  return out;
}

DetLossNodes build_detection_loss(Tape& tape, const BoundParams& params, const DetectorConfig& cfg,
                                  const ForwardNodes& fwd, const DetDecisions& decisions) {
  DetLossNodes out;

  // RPN objectness: global mean over sampled anchors, assembled from
  // per-level means weighted by their share.
  size_t total_sampled = 0, total_pos = 0;
  for (const RpnLevelTargets& t : decisions.rpn) {
    total_sampled += t.sampled_indices.size();
    total_pos += t.reg_indices.size() / 4;
  }
  std::vector<std::pair<int, double>> obj_terms;
  std::vector<int> reg_parts;
  for (size_t l = 0; l < decisions.rpn.size(); ++l) {
    const RpnLevelTargets& t = decisions.rpn[l];
    if (!t.sampled_indices.empty()) {
      const int gathered = tape.gather(fwd.rpn_obj[l], t.sampled_indices);
      const int bce = tape.bce_logits_mean(gathered, t.objectness);
      obj_terms.emplace_back(bce, static_cast<double>(t.sampled_indices.size()) /
                                      static_cast<double>(total_sampled));
    }
    if (!t.reg_indices.empty()) {
      const int gathered = tape.gather(fwd.rpn_reg[l], t.reg_indices);
      reg_parts.push_back(tape.smooth_l1_sum(gathered, t.reg_targets, kSmoothL1Beta));
    }
  }
  out.rpn_obj = obj_terms.empty() ? tape.constant(Tensor::scalar(0.0)) : tape.wsum(obj_terms);
  out.rpn_reg = reg_parts.empty()
                    ? tape.constant(Tensor::scalar(0.0))
                    : tape.scale(tape.sum_list(reg_parts),
                                 1.0 / static_cast<double>(std::max<size_t>(1, total_pos)));

  // ROI heads on the frozen samples.
  std::vector<BBox> roi_boxes;
  roi_boxes.reserve(decisions.rois.size());
  for (const RoiTrainSample& s : decisions.rois) roi_boxes.push_back(s.roi);
  const RoiNodes rois = roi_forward(tape, params, cfg, fwd, roi_boxes);
  out.roi_fc = rois.fc;

  if (!decisions.rois.empty()) {
    std::vector<std::pair<int, double>> ce_terms;
    std::vector<int> reg_terms;
    size_t n_fg = 0;
    const double inv_r = 1.0 / static_cast<double>(decisions.rois.size());
    for (size_t r = 0; r < decisions.rois.size(); ++r) {
      const RoiTrainSample& s = decisions.rois[r];
      ce_terms.emplace_back(tape.softmax_ce(rois.cls_logits[r], s.cls_label), inv_r);
      if (s.has_reg) {
        Tensor target({4});
        for (int k = 0; k < 4; ++k) target[k] = s.reg_target[static_cast<size_t>(k)];
        reg_terms.push_back(tape.smooth_l1_sum(rois.reg[r], target, kSmoothL1Beta));
        ++n_fg;
      }
    }
    out.roi_cls = tape.wsum(ce_terms);
    out.roi_reg = reg_terms.empty()
                      ? tape.constant(Tensor::scalar(0.0))
                      : tape.scale(tape.sum_list(reg_terms),
                                   1.0 / static_cast<double>(std::max<size_t>(1, n_fg)));
  } else {
    out.roi_cls = tape.constant(Tensor::scalar(0.0));
    out.roi_reg = tape.constant(Tensor::scalar(0.0));
  }

  out.total = tape.sum_list({out.rpn_obj, out.rpn_reg, out.roi_cls, out.roi_reg});
  return out;
}

DomainLossNodes build_domain_losses(Tape& tape, const DomainLogits& logits, bool domain_is_target) {
  DomainLossNodes out;
  const double target = domain_is_target ? 1.0 : 0.0;

  const int bce_low = tape.bce_logits_mean(logits.img_low, Tensor({1}, target));
  const int bce_high = tape.bce_logits_mean(logits.img_high, Tensor({1}, target));
  out.adv_img = tape.scale(tape.sum_list({bce_low, bce_high}), 0.5);

  const int p_low = tape.sigmoid(logits.img_low);
  const int p_high = tape.sigmoid(logits.img_high);
  out.cons_img = tape.mean_all(tape.square(tape.sub(p_low, p_high)));

  if (logits.ins >= 0) {
    const int r = tape.value(logits.ins).dim(0);
    out.adv_ins = tape.bce_logits_mean(logits.ins, Tensor({r}, target));
    const int p_mean = tape.scale(tape.sum_list({tape.mean_all(p_low), tape.mean_all(p_high)}), 0.5);
    const int p_ins = tape.sigmoid(logits.ins);
    out.cons_ins = tape.mean_all(tape.square(tape.sub(p_ins, tape.broadcast_to(p_mean, r))));
  }
  return out;
}

}  // namespace ssda
