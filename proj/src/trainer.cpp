#include "ssda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "ssda/batch.hpp"
#include "ssda/error.hpp"
#include "ssda/image_io.hpp"
#include "ssda/mask.hpp"
#include "ssda/pseudo.hpp"

namespace ssda {

using nlohmann::json;

std::vector<TrainSample> load_samples(const Manifest& m, const std::string& data_root) {
  std::vector<TrainSample> out;
  out.reserve(m.records.size());
  for (const ImageRecord& r : m.records) {
    TrainSample s;
    s.record = r;
    const std::string path = data_root.empty() ? r.image_id : data_root + "/" + r.image_id;
    s.image = read_ppm(path);
    if (s.image.dim(1) != r.height || s.image.dim(2) != r.width) {
      throw DataError("image size mismatch for '" + r.image_id + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrainSample> to_samples(const std::vector<SynthSample>& v) {
  std::vector<TrainSample> out;
  out.reserve(v.size());
  for (const SynthSample& s : v) out.push_back(to_sample(s));
  return out;
}

std::vector<Detection> detect_all(const ParamStore& params, const DetectorConfig& cfg,
                                  const std::vector<TrainSample>& samples) {
  std::vector<std::vector<Detection>> per_image(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < static_cast<int64_t>(samples.size()); ++i) {
    DetectorOutput out = run_detector(params, cfg, samples[static_cast<size_t>(i)].image);
    for (Detection& d : out.detections) d.image_id = samples[static_cast<size_t>(i)].record.image_id;
    per_image[static_cast<size_t>(i)] = std::move(out.detections);
  }
  std::vector<Detection> dets;
  for (auto& v : per_image) {
    dets.insert(dets.end(), v.begin(), v.end());
  }
  return dets;
}

EvalReport evaluate_params(const ParamStore& params, const DetectorConfig& cfg,
                           const std::vector<TrainSample>& val) {
  Manifest m;
  for (const TrainSample& s : val) m.records.push_back(s.record);
  return evaluate(detect_all(params, cfg, val), ground_truth_of(m));
}

namespace {

struct ImageTask {
  const Tensor* image = nullptr;
  std::vector<BBox> gt;
  bool is_labeled = true;
  bool domain_is_target = false;
  uint64_t decision_seed = 0;
};

struct ImageResult {
  GradSet grads;
  double l_s = 0, l_m = 0, l_a_img = 0, l_a_ins = 0, l_c_img = 0, l_c_ins = 0;

  explicit ImageResult(const ParamStore& params) : grads(params) {}
};

void process_image(const ParamStore& params, const DetectorConfig& det_cfg, const ImageTask& task,
                   const LossWeights& w, int n_s, int n_t, bool with_domain, double da_rate,
                   ImageResult& out) {
  Tape tape;
  const BoundParams bound = bind_params(tape, params, &out.grads);
  const int image_node = tape.constant(*task.image);
  const ForwardNodes fwd = detector_forward_nodes(tape, bound, det_cfg, image_node);
  const int img_h = task.image->dim(1), img_w = task.image->dim(2);
  const std::vector<Proposal> proposals = generate_proposals(tape, fwd, det_cfg, img_w, img_h);
  Rng rng(task.decision_seed);
  const DetDecisions decisions =
      make_detection_decisions(tape, fwd, det_cfg, task.gt, proposals, img_w, img_h, rng);
  const DetLossNodes det = build_detection_loss(tape, bound, det_cfg, fwd, decisions);

  int l_s_node = -1, l_m_node = -1;
  (task.is_labeled ? l_s_node : l_m_node) = det.total;
  int a_img = -1, a_ins = -1, c_img = -1, c_ins = -1;
  if (with_domain) {
    const DomainLogits logits = discriminate_domain(tape, bound, det_cfg, fwd, det.roi_fc, da_rate);
    const DomainLossNodes dl = build_domain_losses(tape, logits, task.domain_is_target);
    a_img = dl.adv_img;
    a_ins = dl.adv_ins;
    c_img = dl.cons_img;
    c_ins = dl.cons_ins;
  }
  const int contrib =
      total_loss_node(tape, l_s_node, l_m_node, a_ins, a_img, c_ins, c_img, w, n_s, n_t);
  tape.backward(contrib);

  out.l_s = l_s_node >= 0 ? tape.value(l_s_node)[0] : 0.0;
  out.l_m = l_m_node >= 0 ? tape.value(l_m_node)[0] : 0.0;
  out.l_a_img = a_img >= 0 ? tape.value(a_img)[0] : 0.0;
  out.l_a_ins = a_ins >= 0 ? tape.value(a_ins)[0] : 0.0;
  out.l_c_img = c_img >= 0 ? tape.value(c_img)[0] : 0.0;
  out.l_c_ins = c_ins >= 0 ? tape.value(c_ins)[0] : 0.0;
}

/// Run the tasks of one step in parallel, reduce gradients in task order.
LossBreakdown run_step_tasks(const ParamStore& params, const DetectorConfig& det_cfg,
                             const std::vector<ImageTask>& tasks, const LossWeights& w, int n_s,
                             int n_t, bool with_domain, double da_rate, GradSet& grads) {
  std::vector<ImageResult> results;
  results.reserve(tasks.size());
  for (size_t i = 0; i < tasks.size(); ++i) results.emplace_back(params);

#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < static_cast<int64_t>(tasks.size()); ++i) {
    process_image(params, det_cfg, tasks[static_cast<size_t>(i)], w, n_s, n_t, with_domain,
                  da_rate, results[static_cast<size_t>(i)]);
  }

  grads.zero();
  LossBreakdown parts;
  parts.n_s = n_s;
  parts.n_t = n_t;
  for (const ImageResult& r : results) {
    grads.add_scaled(r.grads, 1.0);
    parts.l_s += r.l_s;
    parts.l_m += r.l_m;
    parts.l_a_img += r.l_a_img;
    parts.l_a_ins += r.l_a_ins;
    parts.l_c_img += r.l_c_img;
    parts.l_c_ins += r.l_c_ins;
  }
  parts.total = total_loss(parts, w, n_s, n_t);
  return parts;
}

void write_epoch_log(std::ofstream* os, const EpochLog& e) {
  if (os == nullptr || !os->is_open()) return;
  json j;
  j["epoch"] = e.epoch;
  j["mean_total"] = e.mean_total;
  j["lr"] = e.lr_last;
  j["pseudo_positive_boxes"] = e.counters.positive_boxes;
  j["pseudo_positive_images"] = e.counters.positive_images;
  j["pseudo_reliable_background"] = e.counters.reliable_background;
  j["pseudo_unusable"] = e.counters.unusable;
  if (e.val_map_50) j["val_map_50"] = *e.val_map_50;
  if (e.val_map_50_95) j["val_map_50_95"] = *e.val_map_50_95;
  (*os) << j.dump() << "\n";
  os->flush();
}

}  // namespace

TrainResult train_stage1(const std::vector<TrainSample>& source, const TrainConfig& cfg,
                         const DetectorConfig& det_cfg, const std::vector<TrainSample>* val,
                         const std::string& metrics_log_path) {
  cfg.validate();
  det_cfg.validate();
  if (source.empty()) throw ConfigError("stage-1 training needs a non-empty source set");

  TrainResult result;
  ParamStore params = init_detector_params(det_cfg, cfg.seed);
  SgdOptimizer opt(cfg.momentum, cfg.weight_decay);
  EpochSampler sampler(source.size(), cfg.batch_size, Rng::mix(cfg.seed, 0x51a6e1));
  const int64_t spe = static_cast<int64_t>(sampler.steps_per_epoch());
  const LossWeights weights = cfg.weights();
  GradSet grads(params);

  std::ofstream log_os;
  if (!metrics_log_path.empty()) log_os.open(metrics_log_path);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total_sum = 0.0;
    double lr = 0.0;
    for (int64_t s = 0; s < spe; ++s, ++step) {
      const std::vector<size_t> batch = sampler.next();
      lr = lr_schedule(step, spe, cfg);

      std::vector<ImageTask> tasks;
      tasks.reserve(batch.size());
      for (size_t bi = 0; bi < batch.size(); ++bi) {
        const TrainSample& smp = source[batch[bi]];
        ImageTask t;
        t.image = &smp.image;
        t.gt = smp.record.boxes;
        t.is_labeled = true;
        t.decision_seed = Rng::mix(Rng::mix(cfg.seed, 0xdec1), Rng::mix(step, bi));
        tasks.push_back(std::move(t));
      }
      const LossBreakdown parts = run_step_tasks(params, det_cfg, tasks, weights,
                                                 static_cast<int>(tasks.size()), 0,
                                                 /*with_domain=*/false, cfg.da_rate, grads);
      if (cfg.clip_grad_norm > 0.0) clip_gradients(grads, cfg.clip_grad_norm);
      opt.step(params, grads, lr);
      total_sum += parts.total;
      result.steps.push_back(StepLog{step, epoch, lr, parts, {}});
    }
    EpochLog el;
    el.epoch = epoch;
    el.mean_total = total_sum / static_cast<double>(spe);
    el.lr_last = lr;
    if (val != nullptr && !val->empty()) {
      const EvalReport rep = evaluate_params(params, det_cfg, *val);
      el.val_map_50 = rep.map_50;
      el.val_map_50_95 = rep.map_50_95;
    }
    write_epoch_log(&log_os, el);
    result.epochs.push_back(std::move(el));
  }
  if (!params.all_finite()) throw TrainError("non-finite parameters after stage-1 training");
  result.student = Checkpoint{det_cfg, std::move(params)};
  return result;
}

TrainResult train_stage2(const std::vector<TrainSample>& source_labeled,
                         const std::vector<TrainSample>& target_labeled,
                         const std::vector<TrainSample>& target_unlabeled,
                         const Checkpoint& stage1, const TrainConfig& cfg,
                         const std::vector<TrainSample>* val, const std::string& metrics_log_path,
                         const TrainHooks* hooks) {
  cfg.validate();
  const DetectorConfig& det_cfg = stage1.config;
  det_cfg.validate();
  if (source_labeled.empty() && target_labeled.empty()) {
    throw ConfigError("stage-2 training needs labeled data");
  }
  if (target_unlabeled.empty()) throw ConfigError("stage-2 training needs unlabeled data");

  // labeled pool = source ∪ target-labeled
  std::vector<const TrainSample*> labeled_pool;
  for (const TrainSample& s : source_labeled) labeled_pool.push_back(&s);
  for (const TrainSample& s : target_labeled) labeled_pool.push_back(&s);

  TrainResult result;
  ParamStore student = stage1.params;
  ParamStore teacher = stage1.params;
  SgdOptimizer opt(cfg.momentum, cfg.weight_decay);
  BatchComposer composer(labeled_pool.size(), target_unlabeled.size(), cfg.batch_size,
                         cfg.unlabeled_ratio, Rng::mix(cfg.seed, 0x52a6e2));
  const int64_t spe = static_cast<int64_t>(composer.steps_per_epoch());
  const LossWeights weights = cfg.weights();
  GradSet grads(student);

  std::ofstream log_os;
  if (!metrics_log_path.empty()) log_os.open(metrics_log_path);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total_sum = 0.0;
    double lr = 0.0;
    PseudoCounters epoch_counters;
    int64_t epoch_usable = 0;
    for (int64_t s = 0; s < spe; ++s, ++step) {
      const BatchIndices batch = composer.next();
      lr = lr_schedule(step, spe, cfg);

      // Teacher pseudo-labels the raw unlabeled images.
      PseudoCounters counters;
      std::vector<PseudoLabelSet> pseudo(batch.unlabeled.size());
      std::vector<Tensor> masked(batch.unlabeled.size());
#pragma omp parallel for schedule(dynamic)
      for (int64_t ui = 0; ui < static_cast<int64_t>(batch.unlabeled.size()); ++ui) {
        const TrainSample& smp = target_unlabeled[batch.unlabeled[static_cast<size_t>(ui)]];
        DetectorOutput out = run_detector(teacher, det_cfg, smp.image);
        for (Detection& d : out.detections) d.image_id = smp.record.image_id;
        pseudo[static_cast<size_t>(ui)] = filter_pseudo_labels(out.detections, cfg.tau_u, cfg.tau_l);
        const BlockMask mask =
            generate_mask(smp.image.dim(1), smp.image.dim(2), cfg.mask_block, cfg.mask_ratio,
                          Rng::mix(Rng::mix(cfg.seed, 0x3a5c), Rng::mix(step, ui)));
        masked[static_cast<size_t>(ui)] = apply_mask(smp.image, mask);
      }

      std::vector<ImageTask> tasks;
      for (size_t li = 0; li < batch.labeled.size(); ++li) {
        const TrainSample& smp = *labeled_pool[batch.labeled[li]];
        ImageTask t;
        t.image = &smp.image;
        t.gt = smp.record.boxes;
        t.is_labeled = true;
        t.domain_is_target = smp.record.domain == Domain::target;
        t.decision_seed = Rng::mix(Rng::mix(cfg.seed, 0xdec2), Rng::mix(step, li));
        tasks.push_back(std::move(t));
      }
      for (size_t ui = 0; ui < batch.unlabeled.size(); ++ui) {
        const PseudoLabelSet& ps = pseudo[ui];
        const bool background_ok = ps.is_reliable_background && cfg.use_background_labels;
        const bool usable = !ps.positives.empty() || background_ok;
        if (!ps.positives.empty()) {
          counters.positive_images += 1;
          counters.positive_boxes += static_cast<int64_t>(ps.positives.size());
        } else if (ps.is_reliable_background) {
          counters.reliable_background += 1;
        }
        if (!usable) {
          counters.unusable += 1;
          continue;  // skip signal, not an error
        }
        ImageTask t;
        t.image = &masked[ui];
        t.gt = ps.target_boxes();
        t.is_labeled = false;
        t.domain_is_target = true;
        t.decision_seed = Rng::mix(Rng::mix(cfg.seed, 0xdec3), Rng::mix(step, ui + 1000));
        tasks.push_back(std::move(t));
      }

      const int n_s = static_cast<int>(batch.labeled.size());
      const int n_t = static_cast<int>(batch.unlabeled.size());
      const LossBreakdown parts = run_step_tasks(student, det_cfg, tasks, weights, n_s, n_t,
                                                 /*with_domain=*/true, cfg.da_rate, grads);
      if (cfg.clip_grad_norm > 0.0) clip_gradients(grads, cfg.clip_grad_norm);
      opt.step(student, grads, lr);
      if (step % cfg.ema_period == 0) ema_update(teacher, student, cfg.ema_decay);
      if (hooks != nullptr && hooks->after_step) hooks->after_step(step, student, teacher);

      total_sum += parts.total;
      epoch_counters.positive_boxes += counters.positive_boxes;
      epoch_counters.positive_images += counters.positive_images;
      epoch_counters.reliable_background += counters.reliable_background;
      epoch_counters.unusable += counters.unusable;
      epoch_usable += counters.positive_images + counters.reliable_background;
      result.steps.push_back(StepLog{step, epoch, lr, parts, counters});
    }
    if (epoch_usable == 0) {
      std::fprintf(stderr,
                   "[stage2] warning: every unlabeled image was unusable in epoch %d "
                   "(unusable=%lld)\n",
                   epoch, static_cast<long long>(epoch_counters.unusable));
    }
    EpochLog el;
    el.epoch = epoch;
    el.mean_total = total_sum / static_cast<double>(spe);
    el.lr_last = lr;
    el.counters = epoch_counters;
    if (val != nullptr && !val->empty()) {
      const EvalReport rep = evaluate_params(student, det_cfg, *val);
      el.val_map_50 = rep.map_50;
      el.val_map_50_95 = rep.map_50_95;
    }
    write_epoch_log(&log_os, el);
    result.counters.positive_boxes += epoch_counters.positive_boxes;
    result.counters.positive_images += epoch_counters.positive_images;
    result.counters.reliable_background += epoch_counters.reliable_background;
    result.counters.unusable += epoch_counters.unusable;
    result.epochs.push_back(std::move(el));
  }
  if (!student.all_finite()) throw TrainError("non-finite parameters after stage-2 training");
  result.student = Checkpoint{det_cfg, std::move(student)};
  result.teacher = Checkpoint{det_cfg, std::move(teacher)};
  return result;
}

}  // namespace ssda
