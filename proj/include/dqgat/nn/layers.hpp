#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dqgat/autodiff/ops.hpp"

namespace dqgat::nn {

template <typename T>
using Tensor = ad::BasicTensor<T>;

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };
enum class ScoreActivation { kRelu, kLeakyRelu };

/// Ordered, named parameter registry. Tensors are shared handles, so layers
/// and the registry see the same storage.
template <typename T>
class ParamList {
 public:
  Tensor<T> add(std::string name, ad::Shape shape, std::vector<T> values);

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor<T>& operator[](std::size_t i) { return entries_[i].second; }
  const Tensor<T>& operator[](std::size_t i) const { return entries_[i].second; }
  const Tensor<T>* find(const std::string& name) const;
  std::size_t total_values() const;

  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

/// Deterministic fan-in initialisers.
template <typename T>
std::vector<T> uniform_values(std::size_t n, double bound, Rng& rng);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  static Linear create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return ad::linear(x, weight, bias); }
};

/// Factorised Gaussian noise for one forward pass of a noisy layer.
template <typename T>
struct NoiseSample {
  std::vector<T> in;   // f(eps_in)
  std::vector<T> out;  // f(eps_out)

  static NoiseSample draw(std::size_t in_features, std::size_t out_features, Rng& rng);
};

/// y = (b + W x) + (b_noisy * eps_b + (W_noisy * eps_w) x); the noisy stream
/// is dropped entirely in eval mode.
template <typename T>
struct NoisyLinear {
  Tensor<T> weight;        // [out, in]
  Tensor<T> bias;          // [out]
  Tensor<T> weight_noisy;  // [out, in]
  Tensor<T> bias_noisy;    // [out]

  static NoisyLinear create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                            double sigma0, Rng& rng);
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) const;
  Tensor<T> forward_with(const Tensor<T>& x, const NoiseSample<T>& noise) const;
};

template <typename T>
struct Conv {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
  ad::Conv2dSpec spec;

  static Conv create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, ad::Conv2dSpec spec, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return ad::relu(ad::conv2d(x, weight, bias, spec)); }
};

/// Builds the [B*N, N] attention mask: valid nodes see every valid node of
/// their own sample; padded nodes see only themselves.
std::vector<std::uint8_t> attention_mask(std::span<const std::uint8_t> valid, std::size_t batch, std::size_t nodes);

template <typename T>
struct GatHead {
  Tensor<T> weight;     // [F_out, F_in]
  Tensor<T> attention;  // [2 * F_out]
};

template <typename T>
struct GatOutput {
  Tensor<T> features;                // [B*N, F']
  std::vector<Tensor<T>> attention;  // per head, [B*N, N]
};

template <typename T>
struct GatLayer {
  std::vector<GatHead<T>> heads;
  bool concat_heads = true;
  ScoreActivation score = ScoreActivation::kRelu;

  static GatLayer create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                         std::size_t head_count, bool concat_heads, ScoreActivation score, Rng& rng);
  std::size_t out_features() const;

  /// h is [B*N, F_in]; mask is [B*N, N] (see attention_mask).
  GatOutput<T> forward(const Tensor<T>& h, std::size_t batch, std::size_t nodes,
                       std::span<const std::uint8_t> mask) const;
};

/// Graph convolution with fixed aggregation weights [B, N, N].
template <typename T>
struct GcnLayer {
  Tensor<T> weight;  // [F_out, F_in]

  static GcnLayer create(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& weights, std::size_t batch, std::size_t nodes) const;
};

/// Q_a = V + (A_a - mean(A)); value [B], advantage [B, A].
template <typename T>
Tensor<T> dueling_combine(const Tensor<T>& value, const Tensor<T>& advantage);

/// Scalar form of the dueling combination. Throws on an empty advantage.
std::vector<double> dueling_combine(double value, std::span<const double> advantage);

}  // namespace dqgat::nn
