#include "ssda/nn.hpp"

#include <cmath>

#include "ssda/error.hpp"

namespace ssda {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (has(name)) throw StructureError("duplicate parameter '" + name + "'");
  index_[name] = values_.size();
  names_.push_back(name);
  values_.push_back(std::move(init));
  return values_.back();
}

Tensor& ParamStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw StructureError("unknown parameter '" + name + "'");
  return values_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw StructureError("unknown parameter '" + name + "'");
  return values_[it->second];
}

bool ParamStore::same_structure(const ParamStore& o) const {
  if (names_ != o.names_) return false;
  for (size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].shape != o.values_[i].shape) return false;
  }
  return true;
}

void ParamStore::check_structure(const ParamStore& o) const {
  if (!same_structure(o)) throw StructureError("parameter sets are not structurally identical");
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const Tensor& t : values_) n += t.numel();
  return n;
}

bool ParamStore::all_finite() const {
  for (const Tensor& t : values_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

GradSet::GradSet(const ParamStore& store) {
  grads.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) grads.emplace_back(store.value(i).shape);
}

void GradSet::zero() {
  for (Tensor& g : grads) g.fill(0.0);
}

void GradSet::add_scaled(const GradSet& other, double s) {
  if (other.grads.size() != grads.size()) throw StructureError("GradSet size mismatch");
  for (size_t i = 0; i < grads.size(); ++i) {
    for (int64_t k = 0; k < grads[i].numel(); ++k) grads[i][k] += s * other.grads[i][k];
  }
}

int BoundParams::operator[](const std::string& name) const {
  const auto& names = store->names();
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return node_ids[i];
  }
  throw StructureError("unbound parameter '" + name + "'");
}

BoundParams bind_params(Tape& tape, const ParamStore& store, GradSet* grads) {
  BoundParams bp;
  bp.store = &store;
  bp.node_ids.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    Tensor* sink = grads != nullptr ? &grads->grads[i] : nullptr;
    bp.node_ids.push_back(tape.leaf(store.value(i), sink));
  }
  return bp;
}

void ema_update(ParamStore& teacher, const ParamStore& student, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("ema decay must be in [0,1]");
  teacher.check_structure(student);
  for (size_t i = 0; i < teacher.size(); ++i) {
    Tensor& t = teacher.value(i);
    const Tensor& s = student.value(i);
    for (int64_t k = 0; k < t.numel(); ++k) t[k] = decay * t[k] + (1.0 - decay) * s[k];
  }
}

double clip_gradients(GradSet& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads.grads) {
    for (double v : g.data) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads.grads) {
      for (double& v : g.data) v *= s;
    }
  }
  return norm;
}

void SgdOptimizer::step(ParamStore& params, const GradSet& grads, double lr) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) velocity_.emplace_back(params.value(i).shape);
  }
  if (velocity_.size() != params.size() || grads.grads.size() != params.size()) {
    throw StructureError("optimizer state does not match parameters");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    Tensor& v = velocity_[i];
    const Tensor& g = grads.grads[i];
    for (int64_t k = 0; k < p.numel(); ++k) {
      const double gk = g[k] + weight_decay_ * p[k];
      v[k] = momentum_ * v[k] + gk;
      p[k] -= lr * v[k];
    }
  }
}

Tensor he_init_conv(int out_ch, int in_ch, int kh, int kw, Rng& rng) {
  Tensor w({out_ch, in_ch, kh, kw});
  const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * kh * kw));
  for (auto& v : w.data) v = std * rng.normal();
  return w;
}

Tensor he_init_linear(int out_dim, int in_dim, Rng& rng) {
  Tensor w({out_dim, in_dim});
  const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (auto& v : w.data) v = std * rng.normal();
  return w;
}

}  // namespace ssda
