#include "dqgat/nn/config.hpp"

#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace dqgat::nn {

using nlohmann::json;

NetworkKind parse_network_kind(std::string_view name) {
  if (name == "dqgat") return NetworkKind::kDqgat;
  if (name == "gcn_uniform") return NetworkKind::kGcnUniform;
  if (name == "gcn_distance") return NetworkKind::kGcnDistance;
  if (name == "dense_bev") return NetworkKind::kDenseBev;
  throw std::invalid_argument("unknown network kind: " + std::string(name));
}

std::string to_string(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::kDqgat: return "dqgat";
    case NetworkKind::kGcnUniform: return "gcn_uniform";
    case NetworkKind::kGcnDistance: return "gcn_distance";
    case NetworkKind::kDenseBev: return "dense_bev";
  }
  return "unknown";
}

QNetConfig QNetConfig::desk(NetworkKind kind) {
  QNetConfig c;
  c.kind = kind;
  if (kind == NetworkKind::kDenseBev) c.bev_channels = 4;
  return c;
}

QNetConfig QNetConfig::paper_scale() {
  QNetConfig c;
  c.bev_rows = 200;
  c.bev_cols = 280;
  c.z_dim = 512;
  c.embed_dim = 128;
  c.gat_dim = 256;
  return c;
}

void QNetConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw std::invalid_argument(std::string("network config: ") + what + " must be positive");
  };
  positive(bev_channels, "bev_channels");
  positive(bev_rows, "bev_rows");
  positive(bev_cols, "bev_cols");
  positive(z_dim, "z_dim");
  positive(embed_dim, "embed_dim");
  positive(gat_dim, "gat_dim");
  positive(heads1, "heads1");
  positive(heads2, "heads2");
  positive(stream_hidden, "stream_hidden");
  positive(num_actions, "num_actions");
  positive(max_nodes, "max_nodes");
  if (encoder_channels.empty()) throw std::invalid_argument("network config: encoder needs at least one block");
  for (auto ch : encoder_channels) positive(ch, "encoder channel");
  if (!(sigma0 >= 0.0)) throw std::invalid_argument("network config: sigma0 must be non-negative");
}

std::string QNetConfig::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  j["bev_channels"] = bev_channels;
  j["bev_rows"] = bev_rows;
  j["bev_cols"] = bev_cols;
  j["encoder_channels"] = encoder_channels;
  j["z_dim"] = z_dim;
  j["embed_dim"] = embed_dim;
  j["gat_dim"] = gat_dim;
  j["heads1"] = heads1;
  j["heads2"] = heads2;
  j["stream_hidden"] = stream_hidden;
  j["num_actions"] = num_actions;
  j["max_nodes"] = max_nodes;
  j["score"] = score == ScoreActivation::kRelu ? "relu" : "leaky_relu";
  j["sigma0"] = sigma0;
  return j.dump();
}

QNetConfig QNetConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  QNetConfig c = desk(parse_network_kind(j.value("kind", std::string("dqgat"))));
  c.bev_channels = j.value("bev_channels", c.bev_channels);
  c.bev_rows = j.value("bev_rows", c.bev_rows);
  c.bev_cols = j.value("bev_cols", c.bev_cols);
  c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
  c.z_dim = j.value("z_dim", c.z_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.gat_dim = j.value("gat_dim", c.gat_dim);
  c.heads1 = j.value("heads1", c.heads1);
  c.heads2 = j.value("heads2", c.heads2);
  c.stream_hidden = j.value("stream_hidden", c.stream_hidden);
  c.num_actions = j.value("num_actions", c.num_actions);
  c.max_nodes = j.value("max_nodes", c.max_nodes);
  const std::string score = j.value("score", std::string("relu"));
  if (score == "relu") {
    c.score = ScoreActivation::kRelu;
  } else if (score == "leaky_relu") {
    c.score = ScoreActivation::kLeakyRelu;
  } else {
    throw std::invalid_argument("network config: unknown score activation " + score);
  }
  c.sigma0 = j.value("sigma0", c.sigma0);
  c.validate();
  return c;
}

std::uint64_t QNetConfig::hash() const { return fnv1a64(to_json()); }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dqgat::nn
