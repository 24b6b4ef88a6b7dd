#include "dqgat/agents/policy.hpp"

#include <cmath>
#include <cstdio>

namespace dqgat::agents {

std::size_t speed_to_action(double kmh) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < sim::kNumActions; ++a) {
    if (std::abs(sim::kActionSpeedsKmh[a] - kmh) < std::abs(sim::kActionSpeedsKmh[best] - kmh)) best = a;
  }
  return best;
}

ConstantPolicy::ConstantPolicy(double kmh) : kmh_(kmh), action_(speed_to_action(kmh)) {}

std::string ConstantPolicy::name() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "constant:%g", kmh_);
  return buf;
}

void RandomPolicy::reset(const sim::World&, std::uint64_t episode_seed) { rng_.seed(episode_seed ^ 0x5eed5eedULL); }

std::size_t RandomPolicy::act(const sim::World&) {
  std::uniform_int_distribution<std::size_t> pick(0, sim::kNumActions - 1);
  return pick(rng_);
}

}  // namespace dqgat::agents
