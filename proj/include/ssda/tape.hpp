#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ssda/tensor.hpp"

namespace ssda {

/// Reverse-mode autodiff tape. Values are computed eagerly as ops are
/// recorded; backward() replays the recorded closures in reverse order.
/// One tape per forward pass; parameters enter as leaves whose gradients
/// accumulate into caller-owned sink tensors.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  size_t size() const { return nodes_.size(); }

  /// Parameter leaf: value is copied, gradient accumulates into *sink.
  int leaf(const Tensor& value, Tensor* sink);
  /// Non-differentiable input (image pixels, targets).
  int constant(Tensor value);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  /// Seed d(root)/d(root) = 1 and propagate. Root must be a scalar.
  void backward(int root);

  // ---- elementwise / reduction ----
  int add(int a, int b);
  int sub(int a, int b);
  int scale(int a, double s);
  int square(int a);
  int relu(int a);
  int sigmoid(int a);
  int mean_all(int a);
  int sum_list(const std::vector<int>& xs);
  int wsum(const std::vector<std::pair<int, double>>& terms);

  // ---- structure ----
  int concat_ch(int a, int b);
  int upsample2x(int a);
  int spatial_mean(int a);
  int gather(int a, std::vector<int64_t> indices);
  int stack_scalars(const std::vector<int>& xs);
  int broadcast_to(int scalar, int n);

  // ---- layers ----
  int conv2d(int x, int w, int b, int stride, int pad);
  int linear(int x, int w, int b);
  int roi_align(int feat, double x1, double y1, double x2, double y2, int pool);

  /// Identity forward; backward multiplies the incoming gradient by -coeff.
  int grad_reverse(int a, double coeff);

  // ---- losses (scalar outputs) ----
  int bce_logits_mean(int logits, Tensor targets);
  int softmax_ce(int logits, int label);
  int smooth_l1_sum(int pred, Tensor target, double beta);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;  // captures ids, never Node references
  };

  int push(Tensor value, std::function<void()> back = nullptr);
  Tensor& grad_mut(int id) { return nodes_[static_cast<size_t>(id)].grad; }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Tensor*>> leaves_;
  bool grad_enabled_;
};

}  // namespace ssda
