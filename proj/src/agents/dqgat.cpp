#include "dqgat/agents/dqgat.hpp"

#include <stdexcept>

#include "dqgat/agents/fsm_ttc.hpp"
#include "dqgat/nn/checkpoint.hpp"

namespace dqgat::agents {

DqgatPolicy::DqgatPolicy(std::shared_ptr<const nn::QNetwork<float>> net)
    : net_(std::move(net)), obs_cfg_(obs::ObsConfig::for_network(net_->config())) {}

std::vector<float> DqgatPolicy::q_values(const sim::World& world) const {
  const auto input = obs::make_input(obs::observe(world, obs_cfg_), net_->config());
  const auto q = net_->forward(input, nn::Mode::kEval).q;
  return {q.data().begin(), q.data().end()};
}

std::size_t DqgatPolicy::act(const sim::World& world) { return nn::argmax_lowest(q_values(world)); }

std::size_t dqgat_act(const nn::QNetwork<float>& net, const obs::Observation& observation) {
  const auto q = net.forward(obs::make_input(observation, net.config()), nn::Mode::kEval).q;
  return nn::argmax_lowest(q.data());
}

std::unique_ptr<Policy> make_policy(const std::string& name, const std::optional<std::filesystem::path>& checkpoint) {
  if (name == "dqgat") {
    if (!checkpoint) throw std::invalid_argument("agent dqgat needs a checkpoint");
    auto ckpt = nn::load_checkpoint(*checkpoint);
    return std::make_unique<DqgatPolicy>(std::make_shared<const nn::QNetwork<float>>(nn::network_from_checkpoint(ckpt)));
  }
  if (name == "fsm_ttc") return std::make_unique<FsmTtcPolicy>();
  if (name == "random") return std::make_unique<RandomPolicy>();
  const std::string prefix = "constant:";
  if (name.rfind(prefix, 0) == 0) {
    const std::string value = name.substr(prefix.size());
    std::size_t used = 0;
    double kmh = 0.0;
    try {
      kmh = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size() || kmh < 0.0) throw std::invalid_argument("bad constant speed: " + name);
    return std::make_unique<ConstantPolicy>(kmh);
  }
  throw std::invalid_argument("unknown agent: " + name + " (expected dqgat, fsm_ttc, random or constant:<kmh>)");
}

}  // namespace dqgat::agents
