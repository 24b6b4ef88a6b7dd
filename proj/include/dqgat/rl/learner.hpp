#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dqgat/nn/qnetwork.hpp"
#include "dqgat/rl/replay.hpp"

namespace dqgat::rl {

/// Double-Q targets from precomputed next-state Q rows ([B, A] row-major):
/// the online row picks the action (lowest index on ties), the target row evaluates it.
std::vector<double> double_q_targets(std::span<const double> rewards, std::span<const std::uint8_t> terminals,
                                     std::span<const double> q_online_next, std::span<const double> q_target_next,
                                     std::size_t num_actions, double gamma);

template <typename T>
struct TdLoss {
  nn::Tensor<T> loss;       // scalar, mean of w (y - Q(s, a))^2
  std::vector<double> td;   // y - Q(s, a)
};

/// Weighted squared TD loss over a Q matrix [B, A]; differentiable in q.
template <typename T>
TdLoss<T> td_loss(const nn::Tensor<T>& q, std::span<const std::size_t> actions, std::span<const double> y,
                  std::span<const double> weights);

/// |td| + floor.
std::vector<double> td_priorities(std::span<const double> td, double floor);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const nn::ParamList<float>& params, AdamConfig cfg = {});
  void step(nn::ParamList<float>& params);
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Scales gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(nn::ParamList<float>& params, double max_norm);

struct LearnerConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  double grad_clip = 10.0;
  std::uint64_t target_sync = 1500;
  double priority_floor = 1e-3;

  void validate() const;
};

struct StepResult {
  double loss = 0.0;
  std::vector<double> td;
  std::vector<double> priorities;
  double grad_norm = 0.0;
};

/// Owns the online network θ, the frozen target θ⁻ and the optimizer state.
class Learner {
 public:
  Learner(nn::QNetConfig net, LearnerConfig cfg, std::uint64_t seed);

  nn::QNetwork<float>& online() { return online_; }
  const nn::QNetwork<float>& online() const { return online_; }
  const nn::QNetwork<float>& target() const { return target_; }
  const LearnerConfig& config() const { return cfg_; }
  std::uint64_t grad_steps() const { return grad_steps_; }
  std::uint64_t sync_count() const { return sync_count_; }

  /// y for every transition, with fresh noise for both networks.
  std::vector<double> targets(std::span<const Transition> batch);
  /// One optimizer step on the weighted TD loss; throws NonFiniteLoss without touching θ.
  StepResult train_step(std::span<const Transition> batch, std::span<const double> y,
                        std::span<const double> weights);
  /// θ⁻ := θ when step is a positive multiple of the sync period; returns whether it copied.
  bool sync_target(std::uint64_t step);
  /// targets + train_step + priority update + scheduled sync.
  StepResult update(ReplayBuffer& buffer, const SampledBatch& batch);

 private:
  nn::QNetConfig net_cfg_;
  LearnerConfig cfg_;
  nn::QNetwork<float> online_;
  nn::QNetwork<float> target_;
  Adam adam_;
  nn::Rng rng_;
  std::uint64_t grad_steps_ = 0;
  std::uint64_t sync_count_ = 0;
};

}  // namespace dqgat::rl
