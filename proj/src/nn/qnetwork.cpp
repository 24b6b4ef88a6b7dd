#include "dqgat/nn/qnetwork.hpp"

#include <cmath>
#include <stdexcept>

namespace dqgat::nn {

template <typename T>
QNetwork<T>::QNetwork(QNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  std::size_t in = config_.bev_channels;
  for (std::size_t i = 0; i < config_.encoder_channels.size(); ++i) {
    const std::size_t out = config_.encoder_channels[i];
    encoder_.push_back(Conv<T>::create(params_, "encoder.conv" + std::to_string(i), in, out, 3, {2, 1}, rng));
    in = out;
  }
  encoder_head_ = Linear<T>::create(params_, "encoder.head", in, config_.z_dim, rng);

  if (config_.kind != NetworkKind::kDenseBev) {
    const std::size_t e = config_.embed_dim;
    node_mlp_[0] = Linear<T>::create(params_, "node.fc0", kNodeFeatureDim, e, rng);
    node_mlp_[1] = Linear<T>::create(params_, "node.fc1", e, e, rng);
    const std::size_t g = e + config_.z_dim;
    const std::size_t f = config_.gat_dim;
    if (config_.kind == NetworkKind::kDqgat) {
      gat1_ = GatLayer<T>::create(params_, "gat1", g, f, config_.heads1, true, config_.score, rng);
      gat2_ = GatLayer<T>::create(params_, "gat2", f * config_.heads1, f, config_.heads2, false, config_.score, rng);
    } else {
      gcn1_ = GcnLayer<T>::create(params_, "gcn1", g, f * config_.heads1, rng);
      gcn2_ = GcnLayer<T>::create(params_, "gcn2", f * config_.heads1, f, rng);
    }
  }

  const std::size_t h = config_.stream_hidden;
  value_[0] = NoisyLinear<T>::create(params_, "value.fc0", head_input_dim(), h, config_.sigma0, rng);
  value_[1] = NoisyLinear<T>::create(params_, "value.fc1", h, 1, config_.sigma0, rng);
  advantage_[0] = NoisyLinear<T>::create(params_, "advantage.fc0", head_input_dim(), h, config_.sigma0, rng);
  advantage_[1] = NoisyLinear<T>::create(params_, "advantage.fc1", h, config_.num_actions, config_.sigma0, rng);
}

template <typename T>
std::size_t QNetwork<T>::head_input_dim() const {
  return config_.kind == NetworkKind::kDenseBev ? config_.z_dim : config_.gat_dim;
}

template <typename T>
Tensor<T> QNetwork<T>::aggregation_weights(const NetInput<T>& input) const {
  const std::size_t b_count = input.batch;
  const std::size_t n = input.nodes;
  const bool distance = config_.kind == NetworkKind::kGcnDistance;
  if (distance && input.positions.size() != b_count * n * 2) {
    throw ad::DimensionError("distance weights need node positions for every row");
  }
  std::vector<T> w(b_count * n * n, T(0));
  for (std::size_t b = 0; b < b_count; ++b) {
    for (std::size_t k = 0; k < n; ++k) {
      T* row = w.data() + (b * n + k) * n;
      const std::size_t rk = b * n + k;
      if (!input.valid[rk]) {
        row[k] = T(1);
        continue;
      }
      double total = 0.0;
      std::vector<double> raw(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t rj = b * n + j;
        if (!input.valid[rj]) continue;
        if (distance) {
          const double dx = input.positions[2 * rk] - input.positions[2 * rj];
          const double dy = input.positions[2 * rk + 1] - input.positions[2 * rj + 1];
          raw[j] = 1.0 / (1.0 + std::hypot(dx, dy));
        } else {
          raw[j] = 1.0;
        }
        total += raw[j];
      }
      for (std::size_t j = 0; j < n; ++j) row[j] = static_cast<T>(raw[j] / total);
    }
  }
  return Tensor<T>({b_count, n, n}, std::move(w));
}

template <typename T>
Tensor<T> QNetwork<T>::encode_bev(const NetInput<T>& input) const {
  auto x = input.bev;
  for (const auto& conv : encoder_) x = conv.forward(x);
  return encoder_head_.forward(ad::global_avg_pool(x));
}

template <typename T>
Tensor<T> QNetwork<T>::graph_input(const NetInput<T>& input, const Tensor<T>& z) const {
  const std::size_t b_count = input.batch;
  const std::size_t n = input.nodes;
  if (n == 0) throw std::invalid_argument("empty node set");
  if (input.features.rank() != 2 || input.features.dim(0) != b_count * n ||
      input.features.dim(1) != kNodeFeatureDim) {
    throw ad::DimensionError("node features " + ad::shape_str(input.features.shape()) + " do not match batch");
  }
  if (input.valid.size() != b_count * n) throw ad::DimensionError("validity mask size does not match batch");
  for (std::size_t b = 0; b < b_count; ++b) {
    if (!input.valid[b * n]) throw std::invalid_argument("empty node set: ego row is not valid");
  }
  const auto e = ad::relu(node_mlp_[1].forward(ad::relu(node_mlp_[0].forward(input.features))));
  std::vector<std::size_t> owner(b_count * n);
  for (std::size_t r = 0; r < owner.size(); ++r) owner[r] = r / n;
  return ad::concat(std::vector<Tensor<T>>{e, ad::select_rows(z, owner)}, 1);
}

template <typename T>
QOutput<T> QNetwork<T>::forward(const NetInput<T>& input, Mode mode, Rng* rng) const {
  const std::size_t b_count = input.batch;
  const std::size_t n = input.nodes;
  if (b_count == 0) throw ad::DimensionError("empty batch");
  if (input.bev.rank() != 4 || input.bev.dim(0) != b_count || input.bev.dim(1) != config_.bev_channels) {
    throw ad::DimensionError("BEV input " + ad::shape_str(input.bev.shape()) + " does not match network with " +
                             std::to_string(config_.bev_channels) + " channels");
  }

  const auto z = encode_bev(input);  // [B, Z]

  QOutput<T> out;
  out.nodes = n;
  Tensor<T> head_in = z;
  if (config_.kind != NetworkKind::kDenseBev) {
    const auto g = graph_input(input, z);
    Tensor<T> h;
    if (config_.kind == NetworkKind::kDqgat) {
      const auto mask = attention_mask(input.valid, b_count, n);
      auto o1 = gat1_.forward(g, b_count, n, mask);
      auto o2 = gat2_.forward(o1.features, b_count, n, mask);
      h = o2.features;
      out.attention.push_back(std::move(o1.attention));
      out.attention.push_back(std::move(o2.attention));
    } else {
      const auto weights = aggregation_weights(input);
      h = gcn2_.forward(gcn1_.forward(g, weights, b_count, n), weights, b_count, n);
    }
    std::vector<std::size_t> ego_rows(b_count);
    for (std::size_t b = 0; b < b_count; ++b) ego_rows[b] = b * n;
    head_in = ad::select_rows(h, ego_rows);
  }

  const auto v = value_[1].forward(ad::relu(value_[0].forward(head_in, mode, rng)), mode, rng);
  const auto a = advantage_[1].forward(ad::relu(advantage_[0].forward(head_in, mode, rng)), mode, rng);
  out.value = ad::reshape(v, {b_count});
  out.advantage = a;
  out.q = dueling_combine(out.value, a);
  return out;
}

template <typename T>
QNetwork<T> QNetwork<T>::clone() const {
  QNetwork copy(config_, 0);
  copy.copy_from(*this);
  return copy;
}

template <typename T>
void QNetwork<T>::copy_from(const QNetwork& other) {
  if (other.params_.size() != params_.size()) throw ad::DimensionError("parameter sets differ in layout");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].shape() != other.params_[i].shape() || params_.name(i) != other.params_.name(i)) {
      throw ad::DimensionError("parameter " + params_.name(i) + " differs in shape");
    }
    auto src = other.params_[i].data();
    std::copy(src.begin(), src.end(), params_[i].data().begin());
  }
}

template <typename T>
bool QNetwork<T>::equal_values(const QNetwork& other) const {
  if (other.params_.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto a = params_[i].data();
    auto b = other.params_[i].data();
    if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin())) return false;
  }
  return true;
}

template <typename T>
NetInput<T> single_input(const Tensor<T>& bev, const Tensor<T>& features, std::vector<double> positions) {
  if (bev.rank() != 3) throw ad::DimensionError("single BEV must be [C,H,W], got " + ad::shape_str(bev.shape()));
  NetInput<T> in;
  in.batch = 1;
  in.nodes = features.dim(0);
  in.bev = ad::reshape(bev, {1, bev.dim(0), bev.dim(1), bev.dim(2)});
  in.features = features;
  in.valid.assign(in.nodes, 1);
  if (positions.empty()) positions.assign(in.nodes * 2, 0.0);
  in.positions = std::move(positions);
  return in;
}

namespace {

template <typename T>
std::size_t argmax_impl(std::span<const T> q) {
  if (q.empty()) throw std::invalid_argument("argmax of empty Q vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i] > q[best]) best = i;
  }
  return best;
}

}  // namespace

std::size_t argmax_lowest(std::span<const float> q) { return argmax_impl(q); }
std::size_t argmax_lowest(std::span<const double> q) { return argmax_impl(q); }

template class QNetwork<float>;
template class QNetwork<double>;
template NetInput<float> single_input<float>(const Tensor<float>&, const Tensor<float>&, std::vector<double>);
template NetInput<double> single_input<double>(const Tensor<double>&, const Tensor<double>&, std::vector<double>);

}  // namespace dqgat::nn
