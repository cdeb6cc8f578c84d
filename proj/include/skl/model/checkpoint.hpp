#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skl/model/config.hpp"
#include "skl/model/network.hpp"
#include "skl/model/tensor.hpp"

namespace skl {

// Layout (little-endian):
//   "SKCK" u32 version u64 config-digest u32 count
//   count x { u32 name-length, name, u32 rank, rank x u32 dims, f32 payload }
//   u32 crc32 of everything before it
// Solver state rides along as extra tensors: "solver.iteration",
// "solver.momentum/<param>" and "lr_mult/<prefix>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkConfig config;
  TensorSet<float> params;
  std::int64_t iteration = 0;
  std::optional<TensorSet<float>> momentum;
  std::vector<std::pair<std::string, double>> lr_mult;
};

template <typename Scalar>
Checkpoint make_checkpoint(const Network<Scalar>& net, std::int64_t iteration = 0,
                           const TensorSet<Scalar>* momentum = nullptr,
                           std::vector<std::pair<std::string, double>> lr_mult = {});

/// Copies parameters into `net`; the configs must be identical.
template <typename Scalar>
void load_into(const Checkpoint& ckpt, Network<Scalar>& net);

template <typename Scalar>
Network<Scalar> instantiate(const Checkpoint& ckpt) {
  Network<Scalar> net(ckpt.config);
  load_into(ckpt, net);
  return net;
}

template <typename Scalar>
TensorSet<Scalar> convert(const TensorSet<float>& in) {
  TensorSet<Scalar> out(in.info_ptr());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i].template cast<Scalar>();
  return out;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes, const NetworkConfig& config);

/// Writes the tensor file plus `<path>.json` holding the network config.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkConfig& config);
std::filesystem::path config_path(const std::filesystem::path& checkpoint);

/// New dense head for `target` (He-uniform over the final width, zero bias),
/// body copied verbatim, head tagged with a 10x learning-rate multiplier.
/// Momentum is dropped and the iteration counter reset.
Checkpoint replace_head(const Checkpoint& ckpt, const NetworkConfig& target, std::uint64_t seed);
Checkpoint replace_head(const Checkpoint& ckpt, int num_classes, std::uint64_t seed);

}  // namespace skl
