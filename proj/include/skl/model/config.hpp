#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace skl {

enum class BlockType { basic, bottleneck };

struct StemSpec {
  int kernel = 3;
  int stride = 1;
  int width = 16;
  int depth = 1;          ///< number of conv-bn-relu layers
  bool max_pool = false;  ///< 3x3 stride-2 pool after the convs
};

struct StageSpec {
  BlockType type = BlockType::basic;
  int blocks = 2;
  int width = 16;  ///< output width; bottlenecks run at width / 4 inside
  int stride = 1;
};

/// Residual-network description: stem, stages of residual blocks, global
/// average pool, dense head.
struct NetworkConfig {
  int input_height = 64;
  int input_width = 64;
  int input_channels = 3;
  StemSpec stem;
  std::vector<StageSpec> stages;
  int num_classes = 12;

  /// Stem 3x3/16, three stages of two basic blocks at 16/32/64, strides 1/2/2.
  static NetworkConfig resnet_tiny(int num_classes = 12, int height = 64, int width = 64, int channels = 3);
  /// ResNet-152 layout (7x7/2 stem + pool, bottleneck stages 3/8/36/3) for
  /// shape checks at 224x224.
  static NetworkConfig resnet152_shape(int num_classes = 12);
  /// "resnet-tiny" or "resnet-152-shape".
  static NetworkConfig preset(std::string_view name, int num_classes, int height, int width, int channels);

  void validate() const;
  int final_width() const;
  /// Spatial size after stem and each stage, for shape validation.
  std::vector<std::pair<int, int>> spatial_dims() const;

  std::string canonical() const;
  std::uint64_t digest() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&);
};

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

enum class ParamKind { conv_weight, bn_gamma, bn_beta, bn_running_mean, bn_running_var, dense_weight, dense_bias };

struct ParamInfo {
  std::string name;
  std::vector<int> shape;  ///< logical dims; conv weights are (out, in, k, k)
  ParamKind kind;
  int rows = 0;  ///< storage matrix dims
  int cols = 0;

  bool learnable() const noexcept { return kind != ParamKind::bn_running_mean && kind != ParamKind::bn_running_var; }
  bool decays() const noexcept { return kind == ParamKind::conv_weight || kind == ParamKind::dense_weight; }
  bool in_head() const noexcept { return name.starts_with("head."); }
  std::size_t count() const noexcept { return std::size_t(rows) * std::size_t(cols); }
};

/// Every tensor of the network in a fixed order; names are unique.
std::vector<ParamInfo> enumerate_parameters(const NetworkConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace skl
