#pragma once

#include <cstdint>
#include <vector>

#include "dqgat/nn/config.hpp"
#include "dqgat/nn/layers.hpp"

namespace dqgat::nn {

/// Batched network input. Node rows are padded to `nodes` per sample; row
/// b*nodes is the ego of sample b.
template <typename T>
struct NetInput {
  std::size_t batch = 0;
  std::size_t nodes = 0;
  Tensor<T> bev;                      // [B, C, H, W]
  Tensor<T> features;                 // [B*N, 10], already scaled
  std::vector<std::uint8_t> valid;    // [B*N]
  std::vector<double> positions;      // [B*N*2], ego-frame metres (GCN distance weights)
};

template <typename T>
struct QOutput {
  Tensor<T> q;          // [B, A]
  Tensor<T> value;      // [B]
  Tensor<T> advantage;  // [B, A]
  /// attention[layer][head] is [B*N, N]; empty for non-attention variants.
  std::vector<std::vector<Tensor<T>>> attention;
  std::size_t nodes = 0;
};

/// Encoder + node MLP + graph layers + dueling noisy heads. Non-copyable
/// because layers hold shared parameter handles; use clone() or copy_from().
template <typename T>
class QNetwork {
 public:
  explicit QNetwork(QNetConfig config, std::uint64_t seed = 0);
  QNetwork(QNetwork&&) noexcept = default;
  QNetwork& operator=(QNetwork&&) noexcept = default;
  QNetwork(const QNetwork&) = delete;
  QNetwork& operator=(const QNetwork&) = delete;

  const QNetConfig& config() const { return config_; }
  ParamList<T>& params() { return params_; }
  const ParamList<T>& params() const { return params_; }

  QOutput<T> forward(const NetInput<T>& input, Mode mode, Rng* rng = nullptr) const;

  QNetwork clone() const;
  /// Value copy of every parameter; shapes must match.
  void copy_from(const QNetwork& other);
  bool equal_values(const QNetwork& other) const;

  template <typename U>
  QNetwork<U> cast() const {
    QNetwork<U> out(config_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto src = params_[i].data();
      auto dst = out.params()[i].data();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<U>(src[k]);
    }
    return out;
  }

  const std::vector<Conv<T>>& encoder() const { return encoder_; }
  const Linear<T>& encoder_head() const { return encoder_head_; }
  const GatLayer<T>& gat(std::size_t layer) const { return layer == 0 ? gat1_ : gat2_; }
  const NoisyLinear<T>& value_stream(std::size_t layer) const { return value_[layer]; }
  const NoisyLinear<T>& advantage_stream(std::size_t layer) const { return advantage_[layer]; }

  /// BEV encoder output z, [B, Z].
  Tensor<T> encode_bev(const NetInput<T>& input) const;
  /// Per-node graph-layer input [B*N, E + Z]: node embedding joined with its sample's z.
  Tensor<T> graph_input(const NetInput<T>& input, const Tensor<T>& z) const;

  /// Fixed [B, N, N] aggregation weights of the GCN variants.
  Tensor<T> aggregation_weights(const NetInput<T>& input) const;

 private:
  QNetConfig config_;
  ParamList<T> params_;
  std::vector<Conv<T>> encoder_;
  Linear<T> encoder_head_;
  Linear<T> node_mlp_[2];
  GatLayer<T> gat1_, gat2_;
  GcnLayer<T> gcn1_, gcn2_;
  NoisyLinear<T> value_[2];
  NoisyLinear<T> advantage_[2];

  std::size_t head_input_dim() const;
};

/// Batch of one: bev [C,H,W], features [N,10] (all valid), positions [N*2].
template <typename T>
NetInput<T> single_input(const Tensor<T>& bev, const Tensor<T>& features, std::vector<double> positions = {});

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const float> q);
std::size_t argmax_lowest(std::span<const double> q);

extern template class QNetwork<float>;
extern template class QNetwork<double>;

}  // namespace dqgat::nn
