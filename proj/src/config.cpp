#include "ssda/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ssda/error.hpp"
#include "ssda/manifest.hpp"

namespace ssda {

void TrainConfig::validate() const {
  if (optimizer != "sgd") throw ConfigError("only the sgd optimizer is supported");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (base_lr <= 0.0) throw ConfigError("base_lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (warmup_epochs < 0.0) throw ConfigError("warmup_epochs must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("ema_decay must be in [0,1]");
  if (!(tau_l >= 0.0 && tau_l < tau_u && tau_u <= 1.0)) {
    throw ConfigError("need 0 <= tau_l < tau_u <= 1");
  }
  if (!(unlabeled_ratio > 0.0 && unlabeled_ratio < 1.0)) {
    throw ConfigError("unlabeled_ratio must be in (0,1)");
  }
  if (mask_block < 1) throw ConfigError("mask_block must be >= 1");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must be in (0,1)");
  if (lambda_mask < 0 || lambda_adv_ins < 0 || lambda_adv_img < 0 || lambda_cons_ins < 0 ||
      lambda_cons_img < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (da_rate < 0.0) throw ConfigError("da_rate must be >= 0");
  if (lr_decay_epoch < 0 || lr_decay_factor <= 0.0) throw ConfigError("bad lr decay settings");
  if (ema_period < 1) throw ConfigError("ema_period must be >= 1");
  if (clip_grad_norm < 0.0) throw ConfigError("clip_grad_norm must be >= 0");
}

namespace {

std::map<std::string, std::string> to_kv(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  auto put = [&](const std::string& k, auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv[k] = os.str();
  };
  kv["optimizer"] = c.optimizer;
  put("momentum", c.momentum);
  put("weight_decay", c.weight_decay);
  put("base_lr", c.base_lr);
  put("batch_size", c.batch_size);
  put("epochs", c.epochs);
  put("warmup_epochs", c.warmup_epochs);
  put("ema_decay", c.ema_decay);
  put("tau_u", c.tau_u);
  put("tau_l", c.tau_l);
  put("unlabeled_ratio", c.unlabeled_ratio);
  put("mask_block", c.mask_block);
  put("mask_ratio", c.mask_ratio);
  put("lambda_mask", c.lambda_mask);
  put("lambda_adv_ins", c.lambda_adv_ins);
  put("lambda_adv_img", c.lambda_adv_img);
  put("lambda_cons_ins", c.lambda_cons_ins);
  put("lambda_cons_img", c.lambda_cons_img);
  put("da_rate", c.da_rate);
  put("seed", c.seed);
  put("lr_decay_epoch", c.lr_decay_epoch);
  put("clip_grad_norm", c.clip_grad_norm);
  put("lr_decay_factor", c.lr_decay_factor);
  put("ema_period", c.ema_period);
  kv["use_background_labels"] = c.use_background_labels ? "true" : "false";
  return kv;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::istringstream is(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    auto strip = [](std::string s) {
      const auto sb = s.find_first_not_of(" \t");
      const auto se = s.find_last_not_of(" \t");
      return sb == std::string::npos ? std::string() : s.substr(sb, se - sb + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    try {
      if (key == "optimizer") {
        c.optimizer = val;
      } else if (key == "momentum") {
        c.momentum = std::stod(val);
      } else if (key == "weight_decay") {
        c.weight_decay = std::stod(val);
      } else if (key == "base_lr") {
        c.base_lr = std::stod(val);
      } else if (key == "batch_size") {
        c.batch_size = std::stoi(val);
      } else if (key == "epochs") {
        c.epochs = std::stoi(val);
      } else if (key == "warmup_epochs") {
        c.warmup_epochs = std::stod(val);
      } else if (key == "ema_decay") {
        c.ema_decay = std::stod(val);
      } else if (key == "tau_u") {
        c.tau_u = std::stod(val);
      } else if (key == "tau_l") {
        c.tau_l = std::stod(val);
      } else if (key == "unlabeled_ratio") {
        c.unlabeled_ratio = std::stod(val);
      } else if (key == "mask_block") {
        c.mask_block = std::stoi(val);
      } else if (key == "mask_ratio") {
        c.mask_ratio = std::stod(val);
      } else if (key == "lambda_mask") {
        c.lambda_mask = std::stod(val);
      } else if (key == "lambda_adv_ins") {
        c.lambda_adv_ins = std::stod(val);
      } else if (key == "lambda_adv_img") {
        c.lambda_adv_img = std::stod(val);
      } else if (key == "lambda_cons_ins") {
        c.lambda_cons_ins = std::stod(val);
      } else if (key == "lambda_cons_img") {
        c.lambda_cons_img = std::stod(val);
      } else if (key == "da_rate") {
        c.da_rate = std::stod(val);
      } else if (key == "seed") {
        c.seed = std::stoull(val);
      } else if (key == "lr_decay_epoch") {
        c.lr_decay_epoch = std::stoi(val);
      } else if (key == "lr_decay_factor") {
        c.lr_decay_factor = std::stod(val);
      } else if (key == "ema_period") {
        c.ema_period = std::stoi(val);
      } else if (key == "clip_grad_norm") {
        c.clip_grad_norm = std::stod(val);
      } else if (key == "use_background_labels") {
        c.use_background_labels = parse_bool(val, key);
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for " + key);
    } catch (const std::out_of_range&) {
      throw ConfigError("line " + std::to_string(lineno) + ": value out of range for " + key);
    }
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_train_config(buf.str());
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& [k, v] : to_kv(cfg)) os << k << " = " << v << "\n";
  if (!os) throw DataError("write failed for '" + path + "'");
}

double lr_schedule(int64_t step, int64_t steps_per_epoch, const TrainConfig& cfg) {
  if (step < 0) throw ConfigError("negative step");
  if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
  const int64_t warmup_steps =
      static_cast<int64_t>(round_count(cfg.warmup_epochs * static_cast<double>(steps_per_epoch)));
  if (warmup_steps > 0 && step < warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const int64_t epoch = step / steps_per_epoch;
  return epoch >= cfg.lr_decay_epoch ? cfg.base_lr * cfg.lr_decay_factor : cfg.base_lr;
}

}  // namespace ssda
