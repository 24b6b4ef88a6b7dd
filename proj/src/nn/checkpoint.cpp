#include "dqgat/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace dqgat::nn {

namespace {

constexpr char kMagic[8] = {'D', 'Q', 'G', 'A', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get_u64(is);
  if (n > (1u << 26)) throw CheckpointError("implausible string length in checkpoint");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("truncated checkpoint");
  return s;
}

void put_floats(std::ostream& os, std::span<const float> values) {
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
  }
}

void write_section(std::ostream& os, const std::string& section, const QNetwork<float>& net) {
  for (const auto& [name, t] : net.params()) {
    put_string(os, section + "/" + name);
    put_u64(os, t.rank());
    for (auto d : t.shape()) put_u64(os, d);
    put_floats(os, t.data());
  }
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const QNetwork<float>& online,
                     const QNetwork<float>* target, std::uint64_t step) {
  if (target != nullptr && target->config().to_json() != online.config().to_json()) {
    throw CheckpointError("online and target networks have different configurations");
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp + " for writing");
    os.write(kMagic, sizeof kMagic);
    put_u64(os, kVersion);
    put_u64(os, step);
    put_u64(os, online.config().hash());
    put_string(os, online.config().to_json());
    const std::size_t count = online.params().size() * (target ? 2 : 1);
    put_u64(os, count);
    write_section(os, "online", online);
    if (target) write_section(os, "target", *target);
    if (!os) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  const auto version = get_u64(is);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.step = get_u64(is);
  ck.config_hash = get_u64(is);
  ck.config = QNetConfig::from_json(get_string(is));
  if (ck.config.hash() != ck.config_hash) throw CheckpointError("checkpoint config hash mismatch");
  const auto count = get_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = get_string(is);
    const auto rank = get_u64(is);
    if (rank > 8) throw CheckpointError("implausible tensor rank in checkpoint");
    for (std::uint64_t r = 0; r < rank; ++r) a.shape.push_back(get_u64(is));
    const auto n = ad::shape_size(a.shape);
    std::vector<unsigned char> raw(n * 4);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw CheckpointError("truncated tensor " + a.name);
    }
    a.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[4 * k + b]) << (8 * b);
      std::memcpy(&a.values[k], &bits, 4);
    }
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

void load_section(const Checkpoint& ckpt, const std::string& section, QNetwork<float>& net) {
  auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* a = ckpt.find(section + "/" + params.name(i));
    if (a == nullptr) throw CheckpointError("checkpoint lacks " + section + "/" + params.name(i));
    if (a->shape != params[i].shape()) throw CheckpointError("shape mismatch for " + a->name);
    std::copy(a->values.begin(), a->values.end(), params[i].data().begin());
  }
}

QNetwork<float> network_from_checkpoint(const Checkpoint& ckpt, const std::string& section) {
  QNetwork<float> net(ckpt.config, 0);
  load_section(ckpt, section, net);
  return net;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

}  // namespace dqgat::nn
