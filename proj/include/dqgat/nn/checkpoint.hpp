#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dqgat/nn/qnetwork.hpp"

namespace dqgat::nn {

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  QNetConfig config;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes online parameters under "online/" and, when given, the target copy
/// under "target/".
void save_checkpoint(const std::filesystem::path& path, const QNetwork<float>& online,
                     const QNetwork<float>* target, std::uint64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds a network from a checkpoint section ("online" or "target").
QNetwork<float> network_from_checkpoint(const Checkpoint& ckpt, const std::string& section = "online");
void load_section(const Checkpoint& ckpt, const std::string& section, QNetwork<float>& net);

/// FNV-1a of the file bytes, for provenance records.
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace dqgat::nn
