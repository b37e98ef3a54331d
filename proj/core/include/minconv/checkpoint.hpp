#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "minconv/network.hpp"
#include "minconv/optimizer.hpp"

namespace minconv::checkpoint {

inline constexpr char kMagic[8] = {'M', 'I', 'N', 'C', 'O', 'N', 'V', '1'};

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// File layout: 8-byte magic, u32 metadata length, metadata text (key=value
/// lines), u32 tensor count, then per tensor a u32 name length, the name, u32
/// rank, u64 extents and little-endian float32 values. Running statistics are
/// kept in the metadata with 17 significant digits so they survive exactly.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Tensor<float>* find(const std::string& name) const;
  std::uint64_t epoch() const;
  std::uint64_t digest() const;
  nn::NetworkSpec network_spec() const;
  std::vector<ConvMode> modes() const;
};

std::vector<std::uint8_t> encode(const Checkpoint& ckpt);
Checkpoint decode(std::span<const std::uint8_t> bytes);

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

/// Parameters, per-conv statistics and (optionally) optimizer state.
Checkpoint capture(nn::Network<float>& net, std::uint64_t epoch,
                   const train::Optimizer<float>* optimizer = nullptr);

/// Copies parameters and statistics into `net`. Conv modes may differ; any
/// other architecture difference raises IncompatibleCheckpointError.
void restore_network(const Checkpoint& ckpt, nn::Network<float>& net);

/// Restores optimizer buffers saved by capture(); no-op when none were saved
/// or the optimizer kind differs.
void restore_optimizer(const Checkpoint& ckpt, train::Optimizer<float>& optimizer);

}  // namespace minconv::checkpoint
