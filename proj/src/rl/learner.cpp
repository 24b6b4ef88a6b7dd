#include "dqgat/rl/learner.hpp"

#include <cmath>
#include <sstream>

#include "dqgat/obs/observation.hpp"

namespace dqgat::rl {

std::vector<double> double_q_targets(std::span<const double> rewards, std::span<const std::uint8_t> terminals,
                                     std::span<const double> q_online_next, std::span<const double> q_target_next,
                                     std::size_t num_actions, double gamma) {
  const std::size_t b = rewards.size();
  if (terminals.size() != b || q_online_next.size() != b * num_actions || q_target_next.size() != b * num_actions) {
    throw std::invalid_argument("double_q_targets: inconsistent batch shapes");
  }
  std::vector<double> y(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (terminals[i]) {
      y[i] = rewards[i];
      continue;
    }
    const std::size_t a = nn::argmax_lowest(q_online_next.subspan(i * num_actions, num_actions));
    y[i] = rewards[i] + gamma * q_target_next[i * num_actions + a];
  }
  return y;
}

template <typename T>
TdLoss<T> td_loss(const nn::Tensor<T>& q, std::span<const std::size_t> actions, std::span<const double> y,
                  std::span<const double> weights) {
  const std::size_t b = q.shape().at(0);
  if (actions.size() != b || y.size() != b || weights.size() != b) {
    throw std::invalid_argument("td_loss: inconsistent batch sizes");
  }
  nn::Tensor<T> q_sa = ad::gather_cols(q, actions);
  std::vector<T> yv(y.begin(), y.end());
  std::vector<T> wv(weights.begin(), weights.end());
  nn::Tensor<T> diff = ad::sub(nn::Tensor<T>({b}, std::move(yv)), q_sa);
  nn::Tensor<T> loss = ad::mean(ad::mul(ad::mul(diff, diff), nn::Tensor<T>({b}, std::move(wv))));
  TdLoss<T> out{loss, {}};
  out.td.reserve(b);
  for (std::size_t i = 0; i < b; ++i) out.td.push_back(static_cast<double>(diff.at(i)));
  return out;
}

template TdLoss<float> td_loss(const nn::Tensor<float>&, std::span<const std::size_t>, std::span<const double>,
                               std::span<const double>);
template TdLoss<double> td_loss(const nn::Tensor<double>&, std::span<const std::size_t>, std::span<const double>,
                                std::span<const double>);

std::vector<double> td_priorities(std::span<const double> td, double floor) {
  std::vector<double> p;
  p.reserve(td.size());
  for (double d : td) p.push_back(std::abs(d) + floor);
  return p;
}

Adam::Adam(const nn::ParamList<float>& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& [name, t] : params) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step(nn::ParamList<float>& params) {
  if (params.size() != m_.size()) throw std::invalid_argument("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.has_grad()) continue;
    auto data = p.data();
    auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      data[i] = static_cast<float>(data[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

double clip_grad_norm(nn::ParamList<float>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& [name, p] : params) {
      for (float& g : p.grad()) g *= factor;
    }
  }
  return norm;
}

void LearnerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("gradient clip must be positive");
  if (target_sync == 0) throw std::invalid_argument("target sync period must be positive");
  if (!(priority_floor > 0.0)) throw std::invalid_argument("priority floor must be positive");
}

Learner::Learner(nn::QNetConfig net, LearnerConfig cfg, std::uint64_t seed)
    : net_cfg_(std::move(net)),
      cfg_(cfg),
      online_(net_cfg_, seed),
      target_(online_.clone()),
      adam_(online_.params(), AdamConfig{cfg.lr}),
      rng_(seed ^ 0x1ea7e5ULL) {
  cfg_.validate();
}

namespace {

std::vector<const obs::Observation*> pointers(std::span<const Transition> batch, bool next) {
  std::vector<const obs::Observation*> out;
  out.reserve(batch.size());
  for (const auto& t : batch) {
    const auto& o = next ? t.s_next : t.s;
    if (!o) throw std::invalid_argument("transition without observation");
    out.push_back(o.get());
  }
  return out;
}

std::vector<double> to_double(const nn::Tensor<float>& t) {
  auto d = t.data();
  return {d.begin(), d.end()};
}

}  // namespace

std::vector<double> Learner::targets(std::span<const Transition> batch) {
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminals;
  for (const auto& t : batch) {
    rewards.push_back(t.reward);
    terminals.push_back(t.terminal ? 1 : 0);
  }
  const auto next = pointers(batch, true);
  const auto input = obs::make_batch(next, net_cfg_);
  const auto q_online = to_double(online_.forward(input, nn::Mode::kTrain, &rng_).q);
  const auto q_target = to_double(target_.forward(input, nn::Mode::kTrain, &rng_).q);
  return double_q_targets(rewards, terminals, q_online, q_target, net_cfg_.num_actions, cfg_.gamma);
}

StepResult Learner::train_step(std::span<const Transition> batch, std::span<const double> y,
                               std::span<const double> weights) {
  const auto states = pointers(batch, false);
  const auto input = obs::make_batch(states, net_cfg_);
  std::vector<std::size_t> actions;
  for (const auto& t : batch) actions.push_back(t.action);

  auto& params = online_.params();
  params.zero_grad();
  ad::Tape<float> tape;
  StepResult result;
  {
    ad::Tape<float>::Scope scope(tape);
    const auto q = online_.forward(input, nn::Mode::kTrain, &rng_).q;
    auto l = td_loss(q, actions, y, weights);
    result.loss = l.loss.at(0);
    result.td = std::move(l.td);
    if (!std::isfinite(result.loss)) {
      std::ostringstream msg;
      msg << "non-finite TD loss " << result.loss << " at gradient step " << grad_steps_;
      throw NonFiniteLoss(msg.str());
    }
    tape.backward(l.loss);
  }
  result.grad_norm = clip_grad_norm(params, cfg_.grad_clip);
  if (!std::isfinite(result.grad_norm)) {
    params.zero_grad();
    throw NonFiniteLoss("non-finite gradient norm at gradient step " + std::to_string(grad_steps_));
  }
  adam_.step(params);
  ++grad_steps_;
  result.priorities = td_priorities(result.td, cfg_.priority_floor);
  return result;
}

bool Learner::sync_target(std::uint64_t step) {
  if (step == 0 || step % cfg_.target_sync != 0) return false;
  target_.copy_from(online_);
  ++sync_count_;
  return true;
}

StepResult Learner::update(ReplayBuffer& buffer, const SampledBatch& batch) {
  const auto y = targets(batch.items);
  auto result = train_step(batch.items, y, batch.weights);
  buffer.update_priorities(batch.ids, result.priorities);
  sync_target(grad_steps_);
  return result;
}

}  // namespace dqgat::rl
