#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dqgat/obs/observation.hpp"

namespace dqgat::rl {

/// One experience tuple; s and s' are shared so consecutive transitions reuse observations.
struct Transition {
  std::shared_ptr<const obs::Observation> s;
  std::uint8_t action = 0;
  float reward = 0.0f;
  std::shared_ptr<const obs::Observation> s_next;
  bool terminal = false;
};

/// Binary sum tree over `capacity` leaves; every internal node is recomputed from its children.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  void set(std::size_t leaf, double value);
  double get(std::size_t leaf) const { return nodes_[base_ + leaf]; }
  double total() const { return nodes_[1]; }
  /// Leaf whose cumulative interval contains `prefix` (clamped to the non-empty leaves).
  std::size_t find(double prefix) const;
  /// Recomputes every internal node from the leaves.
  void rebuild();
  /// Largest |node - (left + right)| over internal nodes.
  double max_inconsistency() const;

 private:
  std::size_t capacity_;
  std::size_t base_;
  std::vector<double> nodes_;  // 1-based heap layout, leaves at base_ + i
};

struct PerConfig {
  std::size_t capacity = 500000;
  double alpha = 0.6;
  double beta_start = 0.4;
  double beta_end = 1.0;
  double priority_floor = 1e-3;
  double initial_priority = 1.0;

  void validate() const;
  /// Linear annealing of beta over `progress` in [0, 1].
  double beta(double progress) const;
};

struct SampledBatch {
  std::vector<Transition> items;
  std::vector<double> weights;
  std::vector<std::size_t> ids;
  std::vector<double> probabilities;
};

class UnderfullBuffer : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prioritized replay: ring buffer plus sum tree over p^alpha. All operations lock one mutex.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(PerConfig cfg = {});

  /// Inserts with the current maximum priority, evicting the oldest entry when full; returns the leaf id.
  std::size_t push(Transition t);
  /// Stratified proportional sampling with importance weights (N P(i))^-beta / max.
  SampledBatch sample(std::size_t n, double beta, std::mt19937_64& rng) const;
  /// Sets raw priorities (|TD| + floor is the caller's business); stored as p^alpha.
  void update_priorities(std::span<const std::size_t> ids, std::span<const double> priorities);

  std::size_t size() const;
  std::size_t capacity() const { return cfg_.capacity; }
  std::uint64_t pushed() const;
  double total_priority() const;
  double leaf_priority(std::size_t id) const;
  double max_priority() const;
  /// Sum of leaves by direct summation, for consistency checks.
  double direct_leaf_sum() const;
  double tree_inconsistency() const;
  const PerConfig& config() const { return cfg_; }

 private:
  PerConfig cfg_;
  mutable std::mutex mu_;
  SumTree tree_;
  std::vector<Transition> items_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t updates_ = 0;
  double max_priority_;
};

}  // namespace dqgat::rl
