#include "dqgat/rl/replay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dqgat::rl {

namespace {

constexpr std::uint64_t kRebuildEvery = 1u << 20;

}  // namespace

SumTree::SumTree(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("sum tree capacity must be positive");
  base_ = 1;
  while (base_ < capacity) base_ <<= 1;
  nodes_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t leaf, double value) {
  if (leaf >= capacity_) throw std::out_of_range("sum tree leaf out of range");
  if (!(value >= 0.0) || !std::isfinite(value)) throw std::invalid_argument("sum tree values must be finite and >= 0");
  std::size_t i = base_ + leaf;
  nodes_[i] = value;
  for (i >>= 1; i >= 1; i >>= 1) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

std::size_t SumTree::find(double prefix) const {
  std::size_t i = 1;
  while (i < base_) {
    const double left = nodes_[2 * i];
    if (prefix < left || nodes_[2 * i + 1] <= 0.0) {
      i = 2 * i;
    } else {
      prefix -= left;
      i = 2 * i + 1;
    }
  }
  return std::min(i - base_, capacity_ - 1);
}

void SumTree::rebuild() {
  for (std::size_t i = base_ - 1; i >= 1; --i) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

double SumTree::max_inconsistency() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < base_; ++i) worst = std::max(worst, std::abs(nodes_[i] - nodes_[2 * i] - nodes_[2 * i + 1]));
  return worst;
}

void PerConfig::validate() const {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  if (!(alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(beta_start >= 0 && beta_start <= 1 && beta_end >= 0 && beta_end <= 1)) {
    throw std::invalid_argument("beta must lie in [0, 1]");
  }
  if (!(priority_floor > 0)) throw std::invalid_argument("priority floor must be positive");
  if (!(initial_priority > 0)) throw std::invalid_argument("initial priority must be positive");
}

double PerConfig::beta(double progress) const {
  return beta_start + (beta_end - beta_start) * std::clamp(progress, 0.0, 1.0);
}

ReplayBuffer::ReplayBuffer(PerConfig cfg) : cfg_(cfg), tree_(cfg.capacity), max_priority_(cfg.initial_priority) {
  cfg_.validate();
  items_.resize(cfg_.capacity);
}

std::size_t ReplayBuffer::push(Transition t) {
  std::lock_guard lock(mu_);
  const std::size_t id = next_;
  items_[id] = std::move(t);
  tree_.set(id, std::pow(max_priority_, cfg_.alpha));
  next_ = (next_ + 1) % cfg_.capacity;
  size_ = std::min(size_ + 1, cfg_.capacity);
  ++pushed_;
  return id;
}

SampledBatch ReplayBuffer::sample(std::size_t n, double beta, std::mt19937_64& rng) const {
  std::lock_guard lock(mu_);
  if (n == 0) throw std::invalid_argument("sample size must be positive");
  if (size_ < n) {
    throw UnderfullBuffer("replay buffer holds " + std::to_string(size_) + " transitions, " + std::to_string(n) +
                          " requested");
  }
  SampledBatch out;
  out.items.reserve(n);
  const double total = tree_.total();
  const double segment = total / static_cast<double>(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double max_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double prefix = std::min((static_cast<double>(i) + u(rng)) * segment, std::nextafter(total, 0.0));
    std::size_t id = tree_.find(prefix);
    if (id >= size_) id = size_ - 1;
    const double p = tree_.get(id) / total;
    const double w = std::pow(static_cast<double>(size_) * p, -beta);
    max_w = std::max(max_w, w);
    out.items.push_back(items_[id]);
    out.ids.push_back(id);
    out.probabilities.push_back(p);
    out.weights.push_back(w);
  }
  for (auto& w : out.weights) w /= max_w;
  return out;
}

void ReplayBuffer::update_priorities(std::span<const std::size_t> ids, std::span<const double> priorities) {
  if (ids.size() != priorities.size()) throw std::invalid_argument("ids and priorities differ in length");
  std::lock_guard lock(mu_);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= size_) throw std::out_of_range("priority update for an empty slot");
    const double p = std::max(priorities[k], cfg_.priority_floor);
    if (!std::isfinite(p)) throw std::invalid_argument("non-finite priority");
    tree_.set(ids[k], std::pow(p, cfg_.alpha));
    max_priority_ = std::max(max_priority_, p);
  }
  updates_ += ids.size();
  if (updates_ >= kRebuildEvery) {
    tree_.rebuild();
    updates_ = 0;
  }
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return size_;
}

std::uint64_t ReplayBuffer::pushed() const {
  std::lock_guard lock(mu_);
  return pushed_;
}

double ReplayBuffer::total_priority() const {
  std::lock_guard lock(mu_);
  return tree_.total();
}

double ReplayBuffer::leaf_priority(std::size_t id) const {
  std::lock_guard lock(mu_);
  return tree_.get(id);
}

double ReplayBuffer::max_priority() const {
  std::lock_guard lock(mu_);
  return max_priority_;
}

double ReplayBuffer::direct_leaf_sum() const {
  std::lock_guard lock(mu_);
  double s = 0.0;
  for (std::size_t i = 0; i < cfg_.capacity; ++i) s += tree_.get(i);
  return s;
}

double ReplayBuffer::tree_inconsistency() const {
  std::lock_guard lock(mu_);
  return tree_.max_inconsistency();
}

}  // namespace dqgat::rl
