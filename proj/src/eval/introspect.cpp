#include "dqgat/eval/introspect.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace dqgat::eval {

nn::NetInput<double> to_double(const nn::NetInput<float>& in) {
  auto cast = [](const nn::Tensor<float>& t) {
    return nn::Tensor<double>(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  };
  return {in.batch, in.nodes, cast(in.bev), cast(in.features), in.valid, in.positions};
}

double greedy_q(const nn::QNetwork<double>& net, const nn::NetInput<double>& input, std::size_t action) {
  return net.forward(input, nn::Mode::kEval).q.at(action);
}

Saliency saliency(const nn::QNetwork<double>& net, const nn::NetInput<double>& input) {
  if (input.batch != 1) throw std::invalid_argument("saliency needs a single observation");
  nn::NetInput<double> in = input;
  const auto bev_values = input.bev.data();
  in.bev = nn::Tensor<double>::parameter(input.bev.shape(), std::vector<double>(bev_values.begin(), bev_values.end()));

  Saliency s;
  s.channels = input.bev.dim(1);
  s.rows = input.bev.dim(2);
  s.cols = input.bev.dim(3);
  ad::Tape<double> tape;
  {
    ad::Tape<double>::Scope scope(tape);
    const auto q = net.forward(in, nn::Mode::kEval).q;
    s.action = nn::argmax_lowest(q.data());
    s.q = q.at(s.action);
    const std::vector<std::size_t> pick{s.action};
    tape.backward(ad::sum(ad::gather_cols(q, pick)));
  }
  const auto g = in.bev.grad();
  s.gradient.resize(in.bev.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) s.gradient[i] = std::abs(g[i]);
  const double mx = s.gradient.empty() ? 0.0 : *std::max_element(s.gradient.begin(), s.gradient.end());
  s.normalized.resize(s.gradient.size(), 0.0);
  if (mx > 0.0) {
    for (std::size_t i = 0; i < s.gradient.size(); ++i) s.normalized[i] = s.gradient[i] / mx;
  }
  const std::size_t plane = s.rows * s.cols;
  s.pixel.assign(plane, 0.0);
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) s.pixel[p] = std::max(s.pixel[p], s.normalized[c * plane + p]);
  }
  return s;
}

Saliency saliency(const nn::QNetwork<float>& net, const obs::Observation& observation) {
  const auto dnet = net.cast<double>();
  return saliency(dnet, to_double(obs::make_input(observation, net.config())));
}

AttentionReport attention_report(const nn::QNetwork<float>& net, const obs::Observation& observation) {
  if (net.config().kind != nn::NetworkKind::kDqgat) throw std::invalid_argument("attention needs a dqgat network");
  const auto input = obs::make_input(observation, net.config());
  const auto out = net.forward(input, nn::Mode::kEval);
  AttentionReport r;
  r.node_ids.assign(observation.nodes.ids.begin(), observation.nodes.ids.end());
  const std::size_t n = input.nodes;
  for (const auto& layer : out.attention) {
    std::vector<std::vector<double>> heads;
    for (const auto& head : layer) {
      const auto a = head.data();
      heads.emplace_back(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(n));
    }
    r.alpha.push_back(std::move(heads));
  }
  return r;
}

std::string to_json(const Saliency& s) {
  return nlohmann::json{{"action", s.action}, {"q", s.q},        {"channels", s.channels},
                        {"rows", s.rows},     {"cols", s.cols},  {"pixel", s.pixel}}
      .dump();
}

std::string to_json(const AttentionReport& r) {
  return nlohmann::json{{"node_ids", r.node_ids}, {"alpha", r.alpha}}.dump();
}

}  // namespace dqgat::eval
