#include "ssda/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssda/checkpoint.hpp"
#include "ssda/config.hpp"
#include "ssda/error.hpp"
#include "ssda/image_io.hpp"
#include "ssda/manifest.hpp"
#include "ssda/metrics.hpp"
#include "ssda/synth.hpp"
#include "ssda/trainer.hpp"

namespace ssda::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void print_summary(const json& j) { std::cout << j.dump() << std::endl; }

std::string default_data_root() {
  const char* env = std::getenv("SSDA_DATA_DIR");
  return env != nullptr ? env : ".";
}

struct SynthArgs {
  std::string out_dir;
  int num_source = 200;
  int num_target = 200;
  int width = 64;
  int height = 64;
  uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  fs::create_directories(fs::path(a.out_dir) / "images");
  SceneSpec spec;
  spec.width = a.width;
  spec.height = a.height;

  Manifest manifest;
  manifest.split_name = "synthetic";
  manifest.seed = a.seed;
  auto emit = [&](Domain domain, int count, const std::string& prefix, uint64_t stream) {
    SceneSpec s = spec;
    s.domain = domain;
    for (const SynthSample& sample :
         generate_dataset(s, count, Rng::mix(a.seed, stream), prefix)) {
      write_ppm(sample.image, (fs::path(a.out_dir) / "images" / sample.record.image_id).string());
      ImageRecord rec = sample.record;
      rec.image_id = "images/" + rec.image_id;
      manifest.records.push_back(std::move(rec));
    }
  };
  emit(Domain::source, a.num_source, "src_", 1);
  emit(Domain::target, a.num_target, "tgt_", 2);

  const std::string manifest_path = (fs::path(a.out_dir) / "manifest.jsonl").string();
  save_manifest(manifest, manifest_path);
  const ManifestCounts c = manifest.counts();
  print_summary(json{{"command", "synth"},
                     {"seed", a.seed},
                     {"manifest", manifest_path},
                     {"source", a.num_source},
                     {"target", a.num_target},
                     {"foreground", c.foreground},
                     {"background", c.background}});
  return 0;
}

struct SplitArgs {
  std::string input;
  std::string out_dir;
  double protocol_percent = 1.0;
  double val_fraction = 0.05;
  uint64_t seed = 0;
  std::string source_scenes_file;
  bool by_camera = false;
};

int cmd_split(const SplitArgs& a) {
  Manifest input = load_manifest(a.input);
  if (!a.source_scenes_file.empty()) {
    std::ifstream is(a.source_scenes_file);
    if (!is) throw DataError("cannot open '" + a.source_scenes_file + "'");
    std::set<std::string> scenes;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty()) scenes.insert(line);
    }
    if (scenes.empty()) throw DataError("no scene names in '" + a.source_scenes_file + "'");
    const DomainMode mode = a.by_camera ? DomainMode::by_camera : DomainMode::by_scene;
    for (ImageRecord& r : input.records) r.domain = classify_domain(r.scene, scenes, mode);
  }

  std::vector<ImageRecord> source_records, target_records;
  for (const ImageRecord& r : input.records) {
    (r.domain == Domain::source ? source_records : target_records).push_back(r);
  }
  if (target_records.empty()) throw DataError("no target-domain records in '" + a.input + "'");

  // --val-fraction 0 skips the val split (the input is already a train pool)
  Manifest target_train, target_val;
  if (a.val_fraction == 0.0) {
    target_train.records = std::move(target_records);
    target_train.seed = a.seed;
  } else {
    std::tie(target_train, target_val) =
        split_train_val(target_records, a.val_fraction, Rng::mix(a.seed, 0x7a11));
  }
  auto [target_labeled, target_unlabeled] =
      sample_protocol(target_train, a.protocol_percent / 100.0, Rng::mix(a.seed, 0x7a12));

  fs::create_directories(a.out_dir);
  Manifest source;
  source.records = std::move(source_records);
  source.split_name = "source";
  source.seed = a.seed;
  target_val.split_name = "target_val";
  target_labeled.split_name = "target_labeled";
  target_unlabeled.split_name = "target_unlabeled";

  const std::string src_path = (fs::path(a.out_dir) / "source.jsonl").string();
  const std::string val_path = (fs::path(a.out_dir) / "target_val.jsonl").string();
  const std::string lab_path = (fs::path(a.out_dir) / "target_labeled.jsonl").string();
  const std::string unlab_path = (fs::path(a.out_dir) / "target_unlabeled.jsonl").string();
  save_manifest(source, src_path);
  save_manifest(target_val, val_path);
  save_manifest(target_labeled, lab_path);
  save_manifest(target_unlabeled, unlab_path);

  const ManifestCounts lc = target_labeled.counts();
  print_summary(json{{"command", "split"},
                     {"seed", a.seed},
                     {"protocol_percent", a.protocol_percent},
                     {"source", source.size()},
                     {"target_val", target_val.size()},
                     {"target_labeled", target_labeled.size()},
                     {"target_labeled_foreground", lc.foreground},
                     {"target_labeled_background", lc.background},
                     {"target_unlabeled", target_unlabeled.size()},
                     {"out_dir", a.out_dir}});
  return 0;
}

int cmd_merge_labels(const std::string& input, const std::string& output) {
  const Manifest in = load_manifest(input);
  size_t before = 0, after = 0;
  for (const ImageRecord& r : in.records) before += r.boxes.size() + r.eval_boxes.size();
  const Manifest out = merge_manifest_labels(in);
  for (const ImageRecord& r : out.records) after += r.boxes.size() + r.eval_boxes.size();
  save_manifest(out, output);
  print_summary(json{{"command", "merge-labels"},
                     {"records", out.size()},
                     {"boxes_before", before},
                     {"boxes_after", after},
                     {"output", output}});
  return 0;
}

int cmd_export(const std::string& input, const std::string& output) {
  const Manifest in = load_manifest(input);
  export_coco(in, output);
  print_summary(json{{"command", "export"}, {"records", in.size()}, {"output", output}});
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& detections_path,
             const std::string& output) {
  const Manifest m = load_manifest(manifest_path);
  const std::vector<Detection> dets = load_detections(detections_path);
  const EvalReport report = evaluate(dets, ground_truth_of(m));
  json j{{"command", "eval"},
         {"map_50_95", report.map_50_95},
         {"map_50", report.map_50},
         {"detections", dets.size()}};
  if (!output.empty()) {
    json rj{{"map_50_95", report.map_50_95}, {"map_50", report.map_50}};
    rj["per_threshold_ap"] = json::array();
    for (const auto& [thr, ap] : report.per_threshold_ap) {
      rj["per_threshold_ap"].push_back(json{{"iou_threshold", thr}, {"ap", ap}});
    }
    std::ofstream os(output);
    if (!os) throw DataError("cannot open '" + output + "' for writing");
    os << rj.dump(2) << "\n";
    j["report"] = output;
  }
  print_summary(j);
  return 0;
}

struct TrainCommonArgs {
  std::string config_path;
  std::string arch_path;
  std::string data_root = default_data_root();
  std::string out_path;
  std::string log_path;
  std::string val_manifest;
  uint64_t seed = 0;
  bool seed_set = false;
  int epochs_override = -1;
};

TrainConfig resolve_train_config(const TrainCommonArgs& a) {
  TrainConfig cfg;
  if (!a.config_path.empty()) cfg = load_train_config(a.config_path);
  if (a.seed_set) cfg.seed = a.seed;
  if (a.epochs_override > 0) cfg.epochs = a.epochs_override;
  cfg.validate();
  return cfg;
}

DetectorConfig resolve_arch(const TrainCommonArgs& a) {
  if (a.arch_path.empty()) return DetectorConfig{};
  std::ifstream is(a.arch_path);
  if (!is) throw DataError("cannot open '" + a.arch_path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return detector_config_from_json(buf.str());
}

int cmd_train_stage1(const std::string& manifest_path, const TrainCommonArgs& a) {
  const TrainConfig cfg = resolve_train_config(a);
  const DetectorConfig det_cfg = resolve_arch(a);
  const Manifest m = load_manifest(manifest_path);
  const std::vector<TrainSample> samples = load_samples(m, a.data_root);
  std::vector<TrainSample> val;
  if (!a.val_manifest.empty()) val = load_samples(load_manifest(a.val_manifest), a.data_root);

  const TrainResult r =
      train_stage1(samples, cfg, det_cfg, val.empty() ? nullptr : &val, a.log_path);
  save_checkpoint(r.student, a.out_path);
  json j{{"command", "train-stage1"},
         {"seed", cfg.seed},
         {"epochs", cfg.epochs},
         {"steps", r.steps.size()},
         {"final_mean_loss", r.epochs.back().mean_total},
         {"checkpoint", a.out_path}};
  if (r.epochs.back().val_map_50) j["val_map_50"] = *r.epochs.back().val_map_50;
  print_summary(j);
  return 0;
}

struct Stage2Args {
  std::string source;
  std::string target_labeled;
  std::string target_unlabeled;
  std::string init_ckpt;
  std::string teacher_out;
};

int cmd_train_stage2(const Stage2Args& s2, const TrainCommonArgs& a) {
  const TrainConfig cfg = resolve_train_config(a);
  const Checkpoint stage1 = load_checkpoint(s2.init_ckpt);
  const std::vector<TrainSample> src = load_samples(load_manifest(s2.source), a.data_root);
  const std::vector<TrainSample> tl = load_samples(load_manifest(s2.target_labeled), a.data_root);
  const std::vector<TrainSample> tu = load_samples(load_manifest(s2.target_unlabeled), a.data_root);
  std::vector<TrainSample> val;
  if (!a.val_manifest.empty()) val = load_samples(load_manifest(a.val_manifest), a.data_root);

  const TrainResult r = train_stage2(src, tl, tu, stage1, cfg, val.empty() ? nullptr : &val,
                                     a.log_path, nullptr);
  save_checkpoint(r.student, a.out_path);
  if (!s2.teacher_out.empty() && r.teacher) save_checkpoint(*r.teacher, s2.teacher_out);
  json j{{"command", "train-stage2"},
         {"seed", cfg.seed},
         {"epochs", cfg.epochs},
         {"steps", r.steps.size()},
         {"final_mean_loss", r.epochs.back().mean_total},
         {"pseudo_positive_images", r.counters.positive_images},
         {"pseudo_reliable_background", r.counters.reliable_background},
         {"pseudo_unusable", r.counters.unusable},
         {"checkpoint", a.out_path}};
  if (r.epochs.back().val_map_50) j["val_map_50"] = *r.epochs.back().val_map_50;
  print_summary(j);
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& manifest_path,
              const std::string& data_root, const std::string& output) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Manifest m = load_manifest(manifest_path);
  const std::vector<TrainSample> samples = load_samples(m, data_root);
  const std::vector<Detection> dets = detect_all(ckpt.params, ckpt.config, samples);
  save_detections(dets, output);
  print_summary(json{{"command", "infer"},
                     {"images", samples.size()},
                     {"detections", dets.size()},
                     {"output", output}});
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"wildfire smoke detection with semi-supervised domain adaptation"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic location-biased dataset");
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();
  synth->add_option("--num-source", synth_args.num_source, "source-style image count");
  synth->add_option("--num-target", synth_args.num_target, "target-style image count");
  synth->add_option("--width", synth_args.width, "image width");
  synth->add_option("--height", synth_args.height, "image height");
  synth->add_option("--seed", synth_args.seed, "random seed")->required();

  SplitArgs split_args;
  CLI::App* split = app.add_subcommand("split", "domain split, val split and protocol sampling");
  split->add_option("--input", split_args.input, "input manifest")->required();
  split->add_option("--out-dir", split_args.out_dir, "output directory")->required();
  split->add_option("--protocol", split_args.protocol_percent,
                    "labeled-target percentage (0.5, 1.0 or 3.0)")
      ->check(CLI::IsMember({0.5, 1.0, 3.0}));
  split->add_option("--val-fraction", split_args.val_fraction, "target val fraction");
  split->add_option("--seed", split_args.seed, "random seed")->required();
  split->add_option("--source-scenes", split_args.source_scenes_file,
                    "file listing source scenes (one per line); re-tags domains");
  split->add_flag("--by-camera", split_args.by_camera, "match source scenes by camera name");

  std::string ml_input, ml_output;
  CLI::App* merge = app.add_subcommand("merge-labels", "merge each record's boxes per class");
  merge->add_option("--input", ml_input, "input manifest")->required();
  merge->add_option("--output", ml_output, "output manifest")->required();

  std::string ex_input, ex_output;
  CLI::App* exp = app.add_subcommand("export", "export a manifest as COCO detection JSON");
  exp->add_option("--input", ex_input, "input manifest")->required();
  exp->add_option("--output", ex_output, "output COCO json")->required();

  std::string ev_manifest, ev_dets, ev_output;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a detections file against a manifest");
  ev->add_option("--manifest", ev_manifest, "ground-truth manifest")->required();
  ev->add_option("--detections", ev_dets, "detections JSON-lines")->required();
  ev->add_option("--output", ev_output, "write the full report here");

  auto add_train_common = [](CLI::App* cmd, TrainCommonArgs& a) {
    cmd->add_option("--config", a.config_path, "training config (key=value lines)");
    cmd->add_option("--arch", a.arch_path, "detector architecture JSON");
    cmd->add_option("--data-root", a.data_root, "image directory (default $SSDA_DATA_DIR or .)");
    cmd->add_option("--out", a.out_path, "output checkpoint")->required();
    cmd->add_option("--log", a.log_path, "metrics log (JSON lines per epoch)");
    cmd->add_option("--val", a.val_manifest, "validation manifest for per-epoch mAP");
    cmd->add_option("--seed", a.seed, "random seed (overrides config)")
        ->each([&a](const std::string&) { a.seed_set = true; });
    cmd->add_option("--epochs", a.epochs_override, "override epoch count");
  };

  std::string s1_manifest;
  TrainCommonArgs s1_common;
  CLI::App* s1 = app.add_subcommand("train-stage1", "supervised source-only training");
  s1->add_option("--manifest", s1_manifest, "labeled source manifest")->required();
  add_train_common(s1, s1_common);

  Stage2Args s2_args;
  TrainCommonArgs s2_common;
  CLI::App* s2 = app.add_subcommand("train-stage2", "semi-supervised domain-adaptation training");
  s2->add_option("--source", s2_args.source, "labeled source manifest")->required();
  s2->add_option("--target-labeled", s2_args.target_labeled, "labeled target manifest")->required();
  s2->add_option("--target-unlabeled", s2_args.target_unlabeled, "unlabeled target manifest")
      ->required();
  s2->add_option("--init", s2_args.init_ckpt, "stage-1 checkpoint")->required();
  s2->add_option("--teacher-out", s2_args.teacher_out, "also save the teacher checkpoint");
  add_train_common(s2, s2_common);

  std::string in_ckpt, in_manifest, in_output;
  std::string in_root = default_data_root();
  CLI::App* inf = app.add_subcommand("infer", "run a checkpoint over a manifest");
  inf->add_option("--checkpoint", in_ckpt, "checkpoint file")->required();
  inf->add_option("--manifest", in_manifest, "input manifest")->required();
  inf->add_option("--data-root", in_root, "image directory (default $SSDA_DATA_DIR or .)");
  inf->add_option("--output", in_output, "detections output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (split->parsed()) return cmd_split(split_args);
    if (merge->parsed()) return cmd_merge_labels(ml_input, ml_output);
    if (exp->parsed()) return cmd_export(ex_input, ex_output);
    if (ev->parsed()) return cmd_eval(ev_manifest, ev_dets, ev_output);
    if (s1->parsed()) return cmd_train_stage1(s1_manifest, s1_common);
    if (s2->parsed()) return cmd_train_stage2(s2_args, s2_common);
    if (inf->parsed()) return cmd_infer(in_ckpt, in_manifest, in_root, in_output);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const EvalError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace ssda::cli
