#include "ssda/batch.hpp"

#include <cmath>

#include "ssda/error.hpp"

namespace ssda {

BatchComposer::BatchComposer(size_t labeled_pool, size_t unlabeled_pool, int batch_size,
                             double unlabeled_ratio, uint64_t seed)
    : labeled_pool_(labeled_pool), unlabeled_pool_(unlabeled_pool), rng_(seed) {
  if (labeled_pool == 0) throw ConfigError("labeled pool is empty");
  if (unlabeled_pool == 0) throw ConfigError("unlabeled pool is empty");
  if (!(unlabeled_ratio > 0.0 && unlabeled_ratio < 1.0)) {
    throw ConfigError("unlabeled_ratio must be in (0,1)");
  }
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  n_unlabeled_ = static_cast<int>(std::floor(unlabeled_ratio * batch_size));
  n_labeled_ = batch_size - n_unlabeled_;
  if (n_unlabeled_ == 0 || n_labeled_ == 0) {
    throw ConfigError("batch composition leaves no room for one of the pools");
  }
  reshuffle_labeled();
  reshuffle_unlabeled();
}

size_t BatchComposer::steps_per_epoch() const {
  return std::max<size_t>(1, unlabeled_pool_ / static_cast<size_t>(n_unlabeled_));
}

void BatchComposer::reshuffle_labeled() {
  labeled_order_ = rng_.permutation(labeled_pool_);
  labeled_pos_ = 0;
}

void BatchComposer::reshuffle_unlabeled() {
  unlabeled_order_ = rng_.permutation(unlabeled_pool_);
  unlabeled_pos_ = 0;
}

BatchIndices BatchComposer::next() {
  BatchIndices out;
  if (unlabeled_pos_ + static_cast<size_t>(n_unlabeled_) > unlabeled_pool_) {
    reshuffle_unlabeled();
  }
  for (int i = 0; i < n_unlabeled_; ++i) out.unlabeled.push_back(unlabeled_order_[unlabeled_pos_++]);
  for (int i = 0; i < n_labeled_; ++i) {
    if (labeled_pos_ >= labeled_pool_) reshuffle_labeled();
    out.labeled.push_back(labeled_order_[labeled_pos_++]);
  }
  return out;
}

EpochSampler::EpochSampler(size_t pool, int batch_size, uint64_t seed)
    : pool_(pool), batch_size_(batch_size), rng_(seed) {
  if (pool == 0) throw ConfigError("sample pool is empty");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  order_ = rng_.permutation(pool_);
}

size_t EpochSampler::steps_per_epoch() const {
  return (pool_ + static_cast<size_t>(batch_size_) - 1) / static_cast<size_t>(batch_size_);
}

std::vector<size_t> EpochSampler::next() {
  if (pos_ >= pool_) {
    order_ = rng_.permutation(pool_);
    pos_ = 0;
  }
  std::vector<size_t> out;
  while (pos_ < pool_ && out.size() < static_cast<size_t>(batch_size_)) {
    out.push_back(order_[pos_++]);
  }
  return out;
}

}  // namespace ssda
