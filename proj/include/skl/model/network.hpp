#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skl/model/config.hpp"
#include "skl/model/layers.hpp"
#include "skl/model/tensor.hpp"

namespace skl {

struct ConvBnPlan {
  std::string conv_name;
  std::string bn_name;
  ConvGeometry geometry;
  std::size_t weight = 0, gamma = 0, beta = 0, mean = 0, var = 0;
  bool relu = true;
};

struct BlockPlan {
  std::string name;
  std::vector<ConvBnPlan> branch;
  std::optional<ConvBnPlan> projection;
};

/// Resolved layer graph: tensor indices and geometry for every layer. Units
/// are numbered 0 = stem, 1..blocks.size() = residual blocks; the head always
/// follows the last unit.
struct NetworkPlan {
  std::vector<ConvBnPlan> stem;
  bool stem_pool = false;
  std::vector<BlockPlan> blocks;
  std::size_t fc_weight = 0, fc_bias = 0;

  static NetworkPlan build(const NetworkConfig& cfg, const std::vector<ParamInfo>& params);
  std::size_t unit_count() const noexcept { return 1 + blocks.size(); }
  /// Unit whose forward pass first reads tensor `param`; the head maps to unit_count().
  std::size_t unit_of(std::size_t param) const { return param_units.at(param); }

  std::vector<std::size_t> param_units;
};

enum class Mode { train, eval };

struct ForwardOptions {
  Mode mode = Mode::eval;
  bool update_running_stats = true;
  /// Record a hash of every rectifier/pool decision per unit.
  bool fingerprint = false;
};

template <typename Scalar>
struct ConvBnCache {
  FeatureMap<Scalar> input;
  FeatureMap<Scalar> conv_out;
  BnCache<Scalar> bn;
  FeatureMap<Scalar> output;
};

template <typename Scalar>
struct BlockCache {
  FeatureMap<Scalar> input;
  std::vector<ConvBnCache<Scalar>> branch;
  std::optional<ConvBnCache<Scalar>> projection;
  FeatureMap<Scalar> output;
};

template <typename Scalar>
struct ForwardCache {
  std::uint64_t generation = 0;
  Mode mode = Mode::eval;
  FeatureMap<Scalar> input;
  std::vector<ConvBnCache<Scalar>> stem;
  std::vector<Eigen::Index> pool_argmax;
  FeatureMap<Scalar> stem_output;
  std::vector<BlockCache<Scalar>> blocks;
  Matrix<Scalar> pooled;  ///< batch x final width
  Matrix<Scalar> logits;  ///< batch x classes
  std::vector<std::uint64_t> fingerprint;
};

struct BackwardOptions {
  /// Activation names whose gradients should be returned.
  std::vector<std::string> capture;
};

template <typename Scalar>
struct BackwardResult {
  TensorSet<Scalar> gradients;
  std::map<std::string, FeatureMap<Scalar>> captured;
};

enum class LayerKind { conv, block, stem, other, unknown };

/// Residual CNN with exact forward and backward passes.
template <typename Scalar>
class Network {
 public:
  /// Zero weights, unit batch-norm gains, zero running means, unit running variances.
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const noexcept { return config_; }
  const NetworkPlan& plan() const noexcept { return plan_; }
  const TensorSet<Scalar>& parameters() const noexcept { return params_; }
  /// Any mutable access invalidates outstanding forward caches.
  TensorSet<Scalar>& mutable_parameters() noexcept {
    ++generation_;
    return params_;
  }
  std::uint64_t generation() const noexcept { return generation_; }

  const BnSettings& bn_settings() const noexcept { return bn_; }

  /// He-uniform weights (bound sqrt(6 / fan-in)), zero biases and betas, unit gains.
  void init_he_uniform(std::uint64_t seed);

  ForwardCache<Scalar> forward(const FeatureMap<Scalar>& input, const ForwardOptions& options = {});
  /// Eval mode, running statistics untouched; safe on a shared network.
  ForwardCache<Scalar> forward_eval(const FeatureMap<Scalar>& input, bool fingerprint = false) const;

  /// Re-runs units >= `unit` from the inputs recorded in `base`, without
  /// touching running statistics. Returns logits; fills `fingerprint` for the
  /// recomputed units when non-null.
  Matrix<Scalar> forward_from(const ForwardCache<Scalar>& base, std::size_t unit, Mode mode,
                              std::vector<std::uint64_t>* fingerprint = nullptr) const;

  BackwardResult<Scalar> backward(const ForwardCache<Scalar>& cache, const Matrix<Scalar>& dlogits,
                                  const BackwardOptions& options = {}) const;

  /// Conv outputs by conv name, the stem output as "stem", block outputs by
  /// block name.
  const FeatureMap<Scalar>& activation(const ForwardCache<Scalar>& cache, const std::string& name) const;

  LayerKind layer_kind(const std::string& name) const;
  std::vector<std::string> conv_layer_names() const;
  /// Output of the final residual block (the stem when there are no blocks).
  std::string default_cam_layer() const;

 private:
  void run_stem(ForwardCache<Scalar>& cache, TensorSet<Scalar>& params, Mode mode, bool update) const;
  void run_block(std::size_t b, const FeatureMap<Scalar>& input, ForwardCache<Scalar>& cache,
                 TensorSet<Scalar>& params, Mode mode, bool update) const;
  void run_head(ForwardCache<Scalar>& cache, const FeatureMap<Scalar>& last) const;
  const FeatureMap<Scalar>& run_conv_bn(const ConvBnPlan& layer, const FeatureMap<Scalar>& input, ConvBnCache<Scalar>& cache,
                                 TensorSet<Scalar>& params, Mode mode, bool update) const;
  FeatureMap<Scalar> back_conv_bn(const ConvBnPlan& layer, const ConvBnCache<Scalar>& cache, FeatureMap<Scalar> dout,
                                  TensorSet<Scalar>& grads, BackwardResult<Scalar>& result,
                                  const BackwardOptions& options, bool need_input_grad) const;
  std::uint64_t unit_fingerprint(const ForwardCache<Scalar>& cache, std::size_t unit) const;

  NetworkConfig config_;
  std::shared_ptr<const std::vector<ParamInfo>> info_;
  NetworkPlan plan_;
  TensorSet<Scalar> params_;
  BnSettings bn_;
  std::uint64_t generation_ = 1;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace skl
