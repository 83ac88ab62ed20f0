#pragma once

#include <cstdint>
#include <vector>

#include "ssda/rng.hpp"

namespace ssda {

/// Indices of one composed mini-batch into the labeled and unlabeled pools.
struct BatchIndices {
  std::vector<size_t> labeled;
  std::vector<size_t> unlabeled;
};

/// Draws floor(unlabeled_ratio * batch_size) unlabeled and the remaining
/// labeled samples per step, without replacement within an epoch and
/// reshuffled per epoch. An epoch ends when the unlabeled pool cannot fill
/// another batch; the (smaller) labeled pool recycles with a reshuffle
/// whenever it runs dry.
class BatchComposer {
 public:
  BatchComposer(size_t labeled_pool, size_t unlabeled_pool, int batch_size, double unlabeled_ratio,
                uint64_t seed);

  int n_labeled() const { return n_labeled_; }
  int n_unlabeled() const { return n_unlabeled_; }
  size_t steps_per_epoch() const;

  BatchIndices next();

 private:
  void reshuffle_labeled();
  void reshuffle_unlabeled();

  size_t labeled_pool_;
  size_t unlabeled_pool_;
  int n_labeled_ = 0;
  int n_unlabeled_ = 0;
  Rng rng_;
  std::vector<size_t> labeled_order_;
  std::vector<size_t> unlabeled_order_;
  size_t labeled_pos_ = 0;
  size_t unlabeled_pos_ = 0;
};

/// Plain epoch iterator over a single pool (stage-1 training): shuffled per
/// epoch, batches consumed in order, final partial batch kept.
class EpochSampler {
 public:
  EpochSampler(size_t pool, int batch_size, uint64_t seed);
  size_t steps_per_epoch() const;
  std::vector<size_t> next();

 private:
  size_t pool_;
  int batch_size_;
  Rng rng_;
  std::vector<size_t> order_;
  size_t pos_ = 0;
};

}  // namespace ssda
