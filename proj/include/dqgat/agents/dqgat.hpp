#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "dqgat/agents/policy.hpp"
#include "dqgat/nn/qnetwork.hpp"
#include "dqgat/obs/observation.hpp"

namespace dqgat::agents {

/// Greedy learned agent: eval-mode Q values, argmax with ties to the lowest (slowest) action.
class DqgatPolicy : public Policy {
 public:
  explicit DqgatPolicy(std::shared_ptr<const nn::QNetwork<float>> net);
  std::string name() const override { return "dqgat"; }
  std::size_t act(const sim::World& world) override;

  std::vector<float> q_values(const sim::World& world) const;
  const nn::QNetwork<float>& network() const { return *net_; }
  const obs::ObsConfig& obs_config() const { return obs_cfg_; }

 private:
  std::shared_ptr<const nn::QNetwork<float>> net_;
  obs::ObsConfig obs_cfg_;
};

/// Eval-mode greedy action for one observation.
std::size_t dqgat_act(const nn::QNetwork<float>& net, const obs::Observation& observation);

/// "dqgat" (needs a checkpoint), "fsm_ttc", "random" or "constant:<kmh>".
std::unique_ptr<Policy> make_policy(const std::string& name,
                                    const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

}  // namespace dqgat::agents
