#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ssda/rng.hpp"
#include "ssda/tape.hpp"
#include "ssda/tensor.hpp"

namespace ssda {

/// Insertion-ordered named tensor collection; holds every learnable
/// parameter of a detector. Two structurally identical stores (same names,
/// same shapes, same order) can be zipped parameter-by-parameter.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  Tensor& value(size_t i) { return values_[i]; }
  const Tensor& value(size_t i) const { return values_[i]; }

  bool same_structure(const ParamStore& o) const;
  /// Throws StructureError unless same_structure.
  void check_structure(const ParamStore& o) const;

  int64_t total_elements() const;
  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, size_t> index_;
};

/// Per-parameter gradient buffers aligned with a ParamStore. Each forward
/// pass accumulates into one GradSet; several sets (one per batch image) are
/// reduced in fixed order so results do not depend on thread scheduling.
struct GradSet {
  std::vector<Tensor> grads;

  explicit GradSet(const ParamStore& store);
  void zero();
  void add_scaled(const GradSet& other, double s);
};

/// Parameters of one store bound to a tape as leaf nodes.
struct BoundParams {
  const ParamStore* store = nullptr;
  std::vector<int> node_ids;

  int operator[](const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamStore& store, GradSet* grads);

/// teacher <- decay * teacher + (1 - decay) * student, elementwise.
/// Throws StructureError on mismatch, ConfigError when decay outside [0,1].
void ema_update(ParamStore& teacher, const ParamStore& student, double decay);

/// Scale gradients down to the given global L2 norm when they exceed it.
/// Returns the pre-clip norm.
double clip_gradients(GradSet& grads, double max_norm);

/// SGD with momentum and decoupled-from-nothing classic L2 weight decay
/// (decay added to the gradient before the momentum update).
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(ParamStore& params, const GradSet& grads, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

// ---- initializers ----
Tensor he_init_conv(int out_ch, int in_ch, int kh, int kw, Rng& rng);
Tensor he_init_linear(int out_dim, int in_dim, Rng& rng);

}  // namespace ssda
