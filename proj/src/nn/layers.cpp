#include "dqgat/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dqgat::nn {

template <typename T>
Tensor<T> ParamList<T>::add(std::string name, ad::Shape shape, std::vector<T> values) {
  for (const auto& [existing, _] : entries_) {
    if (existing == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
  entries_.emplace_back(std::move(name), t);
  return t;
}

template <typename T>
const Tensor<T>* ParamList<T>::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
std::size_t ParamList<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

template <typename T>
void ParamList<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
std::vector<T> uniform_values(std::size_t n, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

template <typename T>
Linear<T> Linear<T>::create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                            Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = params.add(name + ".weight", {out, in}, uniform_values<T>(out * in, bound, rng));
  l.bias = params.add(name + ".bias", {out}, uniform_values<T>(out, bound, rng));
  return l;
}

namespace {

double scaled_noise(double x) { return std::copysign(std::sqrt(std::abs(x)), x); }

}  // namespace

template <typename T>
NoiseSample<T> NoiseSample<T>::draw(std::size_t in_features, std::size_t out_features, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  NoiseSample s;
  s.in.resize(in_features);
  s.out.resize(out_features);
  for (auto& v : s.in) v = static_cast<T>(scaled_noise(normal(rng)));
  for (auto& v : s.out) v = static_cast<T>(scaled_noise(normal(rng)));
  return s;
}

template <typename T>
NoisyLinear<T> NoisyLinear<T>::create(ParamList<T>& params, const std::string& name, std::size_t in,
                                      std::size_t out, double sigma0, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  const T sigma = static_cast<T>(sigma0 / std::sqrt(static_cast<double>(in)));
  NoisyLinear l;
  l.weight = params.add(name + ".weight", {out, in}, uniform_values<T>(out * in, bound, rng));
  l.bias = params.add(name + ".bias", {out}, uniform_values<T>(out, bound, rng));
  l.weight_noisy = params.add(name + ".weight_noisy", {out, in}, std::vector<T>(out * in, sigma));
  l.bias_noisy = params.add(name + ".bias_noisy", {out}, std::vector<T>(out, sigma));
  return l;
}

template <typename T>
Tensor<T> NoisyLinear<T>::forward(const Tensor<T>& x, Mode mode, Rng* rng) const {
  if (mode == Mode::kEval) return ad::linear(x, weight, bias);
  if (rng == nullptr) throw std::invalid_argument("train-mode noisy layer needs a noise source");
  return forward_with(x, NoiseSample<T>::draw(in_features(), out_features(), *rng));
}

template <typename T>
Tensor<T> NoisyLinear<T>::forward_with(const Tensor<T>& x, const NoiseSample<T>& noise) const {
  const std::size_t in = in_features();
  const std::size_t out = out_features();
  if (noise.in.size() != in || noise.out.size() != out) {
    throw ad::DimensionError("noise sample does not match noisy layer " + ad::shape_str(weight.shape()));
  }
  std::vector<T> eps_w(out * in);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) eps_w[o * in + i] = noise.out[o] * noise.in[i];
  }
  const Tensor<T> w_eps({out, in}, std::move(eps_w));
  const Tensor<T> b_eps({out}, noise.out);
  const auto w = ad::add(weight, ad::mul(weight_noisy, w_eps));
  const auto b = ad::add(bias, ad::mul(bias_noisy, b_eps));
  return ad::linear(x, w, b);
}

template <typename T>
Conv<T> Conv<T>::create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, ad::Conv2dSpec spec, Rng& rng) {
  const double fan_in = static_cast<double>(in * kernel * kernel);
  Conv c;
  c.weight = params.add(name + ".weight", {out, in, kernel, kernel},
                        uniform_values<T>(out * in * kernel * kernel, std::sqrt(6.0 / fan_in), rng));
  c.bias = params.add(name + ".bias", {out}, std::vector<T>(out, T(0)));
  c.spec = spec;
  return c;
}

std::vector<std::uint8_t> attention_mask(std::span<const std::uint8_t> valid, std::size_t batch,
                                         std::size_t nodes) {
  if (valid.size() != batch * nodes) throw ad::DimensionError("validity mask size does not match batch");
  std::vector<std::uint8_t> mask(batch * nodes * nodes, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < nodes; ++k) {
      auto* row = mask.data() + (b * nodes + k) * nodes;
      if (!valid[b * nodes + k]) {
        row[k] = 1;
        continue;
      }
      for (std::size_t j = 0; j < nodes; ++j) row[j] = valid[b * nodes + j];
    }
  }
  return mask;
}

template <typename T>
GatLayer<T> GatLayer<T>::create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                                std::size_t head_count, bool concat, ScoreActivation score, Rng& rng) {
  if (head_count == 0) throw std::invalid_argument("GAT layer needs at least one head");
  GatLayer layer;
  layer.concat_heads = concat;
  layer.score = score;
  const double w_bound = std::sqrt(6.0 / static_cast<double>(in + out));
  const double a_bound = std::sqrt(6.0 / static_cast<double>(2 * out + 1));
  for (std::size_t s = 0; s < head_count; ++s) {
    const std::string prefix = name + ".head" + std::to_string(s);
    GatHead<T> h;
    h.weight = params.add(prefix + ".weight", {out, in}, uniform_values<T>(out * in, w_bound, rng));
    h.attention = params.add(prefix + ".attention", {2 * out}, uniform_values<T>(2 * out, a_bound, rng));
    layer.heads.push_back(std::move(h));
  }
  return layer;
}

template <typename T>
std::size_t GatLayer<T>::out_features() const {
  const std::size_t f = heads.front().weight.dim(0);
  return concat_heads ? f * heads.size() : f;
}

template <typename T>
GatOutput<T> GatLayer<T>::forward(const Tensor<T>& h, std::size_t batch, std::size_t nodes,
                                  std::span<const std::uint8_t> mask) const {
  if (h.rank() != 2 || h.dim(0) != batch * nodes) {
    throw ad::DimensionError("GAT input " + ad::shape_str(h.shape()) + " does not match batch of " +
                             std::to_string(batch) + "x" + std::to_string(nodes) + " nodes");
  }
  GatOutput<T> result;
  std::vector<Tensor<T>> outputs;
  for (const auto& head : heads) {
    const std::size_t f = head.weight.dim(0);
    const auto wh = ad::matmul(h, ad::transpose(head.weight));  // [BN, F]
    const auto a_pair = ad::transpose(ad::reshape(head.attention, {2, f}));
    const auto parts = ad::matmul(wh, a_pair);  // [BN, 2]
    const auto src = ad::reshape(ad::slice_cols(parts, 0, 1), {batch, nodes});
    const auto dst = ad::reshape(ad::slice_cols(parts, 1, 2), {batch, nodes});
    auto scores = ad::outer_sum(src, dst);
    scores = score == ScoreActivation::kRelu ? ad::relu(scores) : ad::leaky_relu(scores, T(0.2));
    const auto alpha = ad::softmax_rows(ad::reshape(scores, {batch * nodes, nodes}), mask);
    const auto mixed = ad::bmm(ad::reshape(alpha, {batch, nodes, nodes}), ad::reshape(wh, {batch, nodes, f}));
    outputs.push_back(ad::relu(ad::reshape(mixed, {batch * nodes, f})));
    result.attention.push_back(alpha);
  }
  if (outputs.size() == 1) {
    result.features = outputs.front();
  } else if (concat_heads) {
    result.features = ad::concat(outputs, 1);
  } else {
    auto acc = outputs.front();
    for (std::size_t s = 1; s < outputs.size(); ++s) acc = ad::add(acc, outputs[s]);
    result.features = ad::scale(acc, T(1) / static_cast<T>(outputs.size()));
  }
  return result;
}

template <typename T>
GcnLayer<T> GcnLayer<T>::create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                                Rng& rng) {
  GcnLayer layer;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  layer.weight = params.add(name + ".weight", {out, in}, uniform_values<T>(out * in, bound, rng));
  return layer;
}

template <typename T>
Tensor<T> GcnLayer<T>::forward(const Tensor<T>& h, const Tensor<T>& weights, std::size_t batch,
                               std::size_t nodes) const {
  const std::size_t f = weight.dim(0);
  const auto wh = ad::matmul(h, ad::transpose(weight));
  const auto mixed = ad::bmm(weights, ad::reshape(wh, {batch, nodes, f}));
  return ad::relu(ad::reshape(mixed, {batch * nodes, f}));
}

template <typename T>
Tensor<T> dueling_combine(const Tensor<T>& value, const Tensor<T>& advantage) {
  if (advantage.rank() != 2) throw ad::DimensionError("advantage must be [B, A], got " + ad::shape_str(advantage.shape()));
  const std::size_t actions = advantage.dim(1);
  if (value.size() != advantage.dim(0)) {
    throw ad::DimensionError("value " + ad::shape_str(value.shape()) + " does not match advantage " +
                             ad::shape_str(advantage.shape()));
  }
  const auto centered = ad::sub(advantage, ad::expand_cols(ad::row_mean(advantage), actions));
  return ad::add(centered, ad::expand_cols(ad::reshape(value, {value.size()}), actions));
}

std::vector<double> dueling_combine(double value, std::span<const double> advantage) {
  if (advantage.empty()) throw std::invalid_argument("dueling_combine needs at least one action");
  double mean = 0.0;
  for (double a : advantage) mean += a;
  mean /= static_cast<double>(advantage.size());
  std::vector<double> q;
  q.reserve(advantage.size());
  for (double a : advantage) q.push_back(value + (a - mean));
  return q;
}

#define DQGAT_INSTANTIATE_LAYERS(T)                                                    \
  template class ParamList<T>;                                                         \
  template std::vector<T> uniform_values<T>(std::size_t, double, Rng&);                \
  template struct Linear<T>;                                                           \
  template struct NoiseSample<T>;                                                      \
  template struct NoisyLinear<T>;                                                      \
  template struct Conv<T>;                                                             \
  template struct GatLayer<T>;                                                         \
  template struct GcnLayer<T>;                                                         \
  template Tensor<T> dueling_combine<T>(const Tensor<T>&, const Tensor<T>&);

DQGAT_INSTANTIATE_LAYERS(float)
DQGAT_INSTANTIATE_LAYERS(double)

}  // namespace dqgat::nn
