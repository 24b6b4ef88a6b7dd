#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>

#include "dqgat/sim/world.hpp"

namespace dqgat::agents {

/// A driving policy choosing one of the five target-speed actions per step.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Called once at the start of every episode.
  virtual void reset(const sim::World& world, std::uint64_t episode_seed) {
    (void)world;
    (void)episode_seed;
  }
  virtual std::size_t act(const sim::World& world) = 0;
};

/// Nearest action speed; ties go to the slower action.
std::size_t speed_to_action(double kmh);

class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(double kmh);
  std::string name() const override;
  std::size_t act(const sim::World&) override { return action_; }

 private:
  double kmh_;
  std::size_t action_;
};

class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  void reset(const sim::World& world, std::uint64_t episode_seed) override;
  std::size_t act(const sim::World& world) override;

 private:
  std::mt19937_64 rng_;
};

}  // namespace dqgat::agents
