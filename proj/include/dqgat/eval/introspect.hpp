#pragma once

#include <vector>

#include "dqgat/nn/qnetwork.hpp"
#include "dqgat/obs/observation.hpp"

namespace dqgat::eval {

/// |dQ(s, a*)/dX| over the BEV input, with a* the eval-mode greedy action.
struct Saliency {
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t action = 0;
  double q = 0.0;
  std::vector<double> gradient;    // raw |dQ/dX|, [C, H, W]
  std::vector<double> normalized;  // gradient / max, in [0, 1]
  std::vector<double> pixel;       // max over channels of normalized, [H, W]
};

nn::NetInput<double> to_double(const nn::NetInput<float>& input);

Saliency saliency(const nn::QNetwork<double>& net, const nn::NetInput<double>& input);
/// Evaluates in double precision on a cast copy of the network.
Saliency saliency(const nn::QNetwork<float>& net, const obs::Observation& observation);
/// Greedy-action Q in eval mode, for finite-difference checks.
double greedy_q(const nn::QNetwork<double>& net, const nn::NetInput<double>& input, std::size_t action);

/// Ego-row attention of every layer and head.
struct AttentionReport {
  std::vector<int> node_ids;                           // vehicle ids, ego first
  std::vector<std::vector<std::vector<double>>> alpha;  // [layer][head][node]
};

AttentionReport attention_report(const nn::QNetwork<float>& net, const obs::Observation& observation);

std::string to_json(const Saliency& s);
std::string to_json(const AttentionReport& r);

}  // namespace dqgat::eval
