#include "skl/model/network.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "skl/rng.hpp"

namespace skl {

NetworkPlan NetworkPlan::build(const NetworkConfig& cfg, const std::vector<ParamInfo>& params) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < params.size(); ++i) index.emplace(params[i].name, i);
  auto at = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) fail(Errc::invalid_argument, "plan references missing tensor " + name);
    return it->second;
  };

  NetworkPlan plan;
  plan.param_units.assign(params.size(), 0);
  auto conv_bn = [&](const std::string& conv, const std::string& bn, int kernel, int stride, bool relu,
                     std::size_t unit) {
    ConvBnPlan layer{conv, bn, {kernel, stride}, at(conv + ".weight"), at(bn + ".gamma"), at(bn + ".beta"),
                     at(bn + ".running_mean"), at(bn + ".running_var"), relu};
    for (std::size_t p : {layer.weight, layer.gamma, layer.beta, layer.mean, layer.var}) plan.param_units[p] = unit;
    return layer;
  };

  for (int d = 1; d <= cfg.stem.depth; ++d) {
    const std::string idx = std::to_string(d);
    plan.stem.push_back(conv_bn("stem.conv" + idx, "stem.bn" + idx, d == 1 ? cfg.stem.kernel : 3,
                                d == 1 ? cfg.stem.stride : 1, true, 0));
  }
  plan.stem_pool = cfg.stem.max_pool;

  int in = cfg.stem.width;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const auto& st = cfg.stages[s];
    for (int b = 0; b < st.blocks; ++b) {
      const std::size_t unit = plan.blocks.size() + 1;
      BlockPlan block;
      block.name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      const int stride = b == 0 ? st.stride : 1;
      const std::string& p = block.name;
      if (st.type == BlockType::basic) {
        block.branch.push_back(conv_bn(p + ".conv1", p + ".bn1", 3, stride, true, unit));
        block.branch.push_back(conv_bn(p + ".conv2", p + ".bn2", 3, 1, false, unit));
      } else {
        block.branch.push_back(conv_bn(p + ".conv1", p + ".bn1", 1, 1, true, unit));
        block.branch.push_back(conv_bn(p + ".conv2", p + ".bn2", 3, stride, true, unit));
        block.branch.push_back(conv_bn(p + ".conv3", p + ".bn3", 1, 1, false, unit));
      }
      if (stride != 1 || in != st.width)
        block.projection = conv_bn(p + ".proj.conv", p + ".proj.bn", 1, stride, false, unit);
      plan.blocks.push_back(std::move(block));
      in = st.width;
    }
  }
  plan.fc_weight = at("head.fc.weight");
  plan.fc_bias = at("head.fc.bias");
  plan.param_units[plan.fc_weight] = plan.param_units[plan.fc_bias] = plan.unit_count();
  return plan;
}

template <typename Scalar>
Network<Scalar>::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  info_ = std::make_shared<const std::vector<ParamInfo>>(enumerate_parameters(config_));
  plan_ = NetworkPlan::build(config_, *info_);
  params_ = TensorSet<Scalar>(info_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto kind = params_.info(i).kind;
    if (kind == ParamKind::bn_gamma || kind == ParamKind::bn_running_var) params_[i].setOnes();
  }
}

template <typename Scalar>
void Network<Scalar>::init_he_uniform(std::uint64_t seed) {
  const SeededRng root(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& info = params_.info(i);
    auto& m = params_[i];
    switch (info.kind) {
      case ParamKind::conv_weight:
      case ParamKind::dense_weight: {
        SeededRng rng = root.derive(i);
        const double bound = std::sqrt(6.0 / double(info.cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = Scalar(rng.uniform(-bound, bound));
        break;
      }
      case ParamKind::bn_gamma:
      case ParamKind::bn_running_var: m.setOnes(); break;
      default: m.setZero(); break;
    }
  }
  ++generation_;
}

template <typename Scalar>
const FeatureMap<Scalar>& Network<Scalar>::run_conv_bn(const ConvBnPlan& layer, const FeatureMap<Scalar>& input,
                                                       ConvBnCache<Scalar>& cache, TensorSet<Scalar>& params,
                                                       Mode mode, bool update) const {
  cache.input = input;
  cache.conv_out = conv_forward(input, params[layer.weight], layer.geometry);
  const BnMode bn_mode = mode == Mode::train ? BnMode::batch_stats : BnMode::running_stats;
  cache.output = bn_forward<Scalar>(cache.conv_out, params[layer.gamma].col(0), params[layer.beta].col(0),
                            params[layer.mean].col(0), params[layer.var].col(0), bn_mode,
                            update && mode == Mode::train, bn_, cache.bn);
  if (layer.relu) relu_inplace(cache.output);
  return cache.output;
}

template <typename Scalar>
void Network<Scalar>::run_stem(ForwardCache<Scalar>& cache, TensorSet<Scalar>& params, Mode mode, bool update) const {
  cache.stem.resize(plan_.stem.size());
  const FeatureMap<Scalar>* cur = &cache.input;
  for (std::size_t i = 0; i < plan_.stem.size(); ++i)
    cur = &run_conv_bn(plan_.stem[i], *cur, cache.stem[i], params, mode, update);
  if (plan_.stem_pool)
    cache.stem_output = maxpool_forward(*cur, cache.pool_argmax);
  else
    cache.stem_output = *cur;
}

template <typename Scalar>
void Network<Scalar>::run_block(std::size_t b, const FeatureMap<Scalar>& input, ForwardCache<Scalar>& cache,
                                TensorSet<Scalar>& params, Mode mode, bool update) const {
  const BlockPlan& plan = plan_.blocks[b];
  BlockCache<Scalar>& bc = cache.blocks[b];
  bc.input = input;
  bc.branch.resize(plan.branch.size());
  const FeatureMap<Scalar>* cur = &bc.input;
  for (std::size_t i = 0; i < plan.branch.size(); ++i)
    cur = &run_conv_bn(plan.branch[i], *cur, bc.branch[i], params, mode, update);
  FeatureMap<Scalar> sum = *cur;
  if (plan.projection) {
    bc.projection.emplace();
    sum.data += run_conv_bn(*plan.projection, bc.input, *bc.projection, params, mode, update).data;
  } else {
    bc.projection.reset();
    sum.data += bc.input.data;
  }
  relu_inplace(sum);
  bc.output = std::move(sum);
}

template <typename Scalar>
void Network<Scalar>::run_head(ForwardCache<Scalar>& cache, const FeatureMap<Scalar>& last) const {
  cache.pooled = gap_forward(last);
  cache.logits = cache.pooled * params_[plan_.fc_weight].transpose();
  cache.logits.rowwise() += params_[plan_.fc_bias].col(0).transpose();
}

template <typename Scalar>
std::uint64_t Network<Scalar>::unit_fingerprint(const ForwardCache<Scalar>& cache, std::size_t unit) const {
  std::uint64_t h = mix64(unit);
  auto fold = [&](const FeatureMap<Scalar>& fm) {
    std::uint64_t word = 0;
    int bits = 0;
    const Scalar* p = fm.data.data();
    for (Eigen::Index i = 0; i < fm.data.size(); ++i) {
      word = (word << 1) | (p[i] > Scalar(0) ? 1u : 0u);
      if (++bits == 64) {
        h = mix64(h ^ word);
        word = 0;
        bits = 0;
      }
    }
    h = mix64(h ^ word ^ std::uint64_t(bits));
  };
  if (unit == 0) {
    for (std::size_t i = 0; i < plan_.stem.size(); ++i) fold(cache.stem[i].output);
    for (Eigen::Index a : cache.pool_argmax) h = mix64(h ^ std::uint64_t(a));
    return h;
  }
  const auto& plan = plan_.blocks[unit - 1];
  const auto& bc = cache.blocks[unit - 1];
  for (std::size_t i = 0; i < plan.branch.size(); ++i)
    if (plan.branch[i].relu) fold(bc.branch[i].output);
  fold(bc.output);
  return h;
}

template <typename Scalar>
ForwardCache<Scalar> Network<Scalar>::forward(const FeatureMap<Scalar>& input, const ForwardOptions& options) {
  if (input.height != config_.input_height || input.width != config_.input_width ||
      input.channels() != config_.input_channels)
    fail(Errc::shape_mismatch, "batch is " + std::to_string(input.height) + "x" + std::to_string(input.width) + "x" +
                                   std::to_string(input.channels()) + ", network expects " +
                                   std::to_string(config_.input_height) + "x" + std::to_string(config_.input_width) +
                                   "x" + std::to_string(config_.input_channels));
  if (input.batch < 1) fail(Errc::shape_mismatch, "empty batch");
  ForwardCache<Scalar> cache;
  cache.mode = options.mode;
  cache.input = input;
  cache.blocks.resize(plan_.blocks.size());
  const bool update = options.update_running_stats && options.mode == Mode::train;
  run_stem(cache, params_, options.mode, update);
  const FeatureMap<Scalar>* cur = &cache.stem_output;
  for (std::size_t b = 0; b < plan_.blocks.size(); ++b) {
    run_block(b, *cur, cache, params_, options.mode, update);
    cur = &cache.blocks[b].output;
  }
  run_head(cache, *cur);
  if (options.fingerprint)
    for (std::size_t u = 0; u < plan_.unit_count(); ++u) cache.fingerprint.push_back(unit_fingerprint(cache, u));
  if (update) ++generation_;
  cache.generation = generation_;
  return cache;
}

template <typename Scalar>
ForwardCache<Scalar> Network<Scalar>::forward_eval(const FeatureMap<Scalar>& input, bool fingerprint) const {
  // with update_running_stats off forward() writes nothing
  return const_cast<Network&>(*this).forward(input, {Mode::eval, false, fingerprint});
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::forward_from(const ForwardCache<Scalar>& base, std::size_t unit, Mode mode,
                                             std::vector<std::uint64_t>* fingerprint) const {
  if (unit > plan_.unit_count()) fail(Errc::out_of_range, "no such unit");
  // update = false below, so the running statistics are never written.
  auto& params = const_cast<TensorSet<Scalar>&>(params_);
  ForwardCache<Scalar> tmp;
  tmp.mode = mode;
  tmp.blocks.resize(plan_.blocks.size());
  const FeatureMap<Scalar>* cur;
  if (unit == 0) {
    tmp.input = base.input;
    run_stem(tmp, params, mode, false);
    cur = &tmp.stem_output;
  } else {
    cur = unit == 1 ? &base.stem_output : &base.blocks[unit - 2].output;
  }
  for (std::size_t b = unit == 0 ? 0 : unit - 1; b < plan_.blocks.size(); ++b) {
    run_block(b, *cur, tmp, params, mode, false);
    cur = &tmp.blocks[b].output;
  }
  run_head(tmp, *cur);
  if (fingerprint) {
    fingerprint->clear();
    for (std::size_t u = unit; u < plan_.unit_count(); ++u) fingerprint->push_back(unit_fingerprint(tmp, u));
  }
  return tmp.logits;
}

template <typename Scalar>
FeatureMap<Scalar> Network<Scalar>::back_conv_bn(const ConvBnPlan& layer, const ConvBnCache<Scalar>& cache,
                                                 FeatureMap<Scalar> dout, TensorSet<Scalar>& grads,
                                                 BackwardResult<Scalar>& result, const BackwardOptions& options,
                                                 bool need_input_grad) const {
  if (layer.relu) relu_backward_inplace(dout, cache.output);
  Vector<Scalar> dgamma, dbeta;
  FeatureMap<Scalar> dconv = bn_backward<Scalar>(dout, params_[layer.gamma].col(0), cache.bn, dgamma, dbeta);
  grads[layer.gamma] = dgamma;
  grads[layer.beta] = dbeta;
  if (std::find(options.capture.begin(), options.capture.end(), layer.conv_name) != options.capture.end())
    result.captured[layer.conv_name] = dconv;
  FeatureMap<Scalar> din;
  grads[layer.weight] =
      conv_backward(cache.input, params_[layer.weight], dconv, layer.geometry, need_input_grad ? &din : nullptr);
  return din;
}

template <typename Scalar>
BackwardResult<Scalar> Network<Scalar>::backward(const ForwardCache<Scalar>& cache, const Matrix<Scalar>& dlogits,
                                                 const BackwardOptions& options) const {
  if (cache.generation != generation_)
    fail(Errc::stale_cache, "forward cache predates the current parameters; re-run forward");
  if (dlogits.rows() != cache.logits.rows() || dlogits.cols() != cache.logits.cols())
    fail(Errc::shape_mismatch, "dlogits shape differs from logits");
  for (const auto& name : options.capture) {
    const auto kind = layer_kind(name);
    if (kind == LayerKind::unknown) fail(Errc::invalid_argument, "unknown layer: " + name);
    if (kind == LayerKind::other) fail(Errc::invalid_argument, "not a convolutional layer: " + name);
  }
  auto wants = [&](const std::string& name) {
    return std::find(options.capture.begin(), options.capture.end(), name) != options.capture.end();
  };

  BackwardResult<Scalar> result{params_.zeros_like(), {}};
  auto& grads = result.gradients;
  grads[plan_.fc_weight] = dlogits.transpose() * cache.pooled;
  grads[plan_.fc_bias] = dlogits.colwise().sum().transpose();
  const Matrix<Scalar> dpooled = dlogits * params_[plan_.fc_weight];
  const FeatureMap<Scalar>& last = plan_.blocks.empty() ? cache.stem_output : cache.blocks.back().output;
  FeatureMap<Scalar> d = gap_backward(dpooled, last.height, last.width);

  for (std::size_t b = plan_.blocks.size(); b-- > 0;) {
    const BlockPlan& plan = plan_.blocks[b];
    const BlockCache<Scalar>& bc = cache.blocks[b];
    if (wants(plan.name)) result.captured[plan.name] = d;
    relu_backward_inplace(d, bc.output);
    FeatureMap<Scalar> dcur = d;
    for (std::size_t i = plan.branch.size(); i-- > 0;)
      dcur = back_conv_bn(plan.branch[i], bc.branch[i], std::move(dcur), grads, result, options, true);
    if (plan.projection)
      dcur.data += back_conv_bn(*plan.projection, *bc.projection, d, grads, result, options, true).data;
    else
      dcur.data += d.data;
    d = std::move(dcur);
  }

  if (wants("stem")) result.captured["stem"] = d;
  if (plan_.stem_pool) d = maxpool_backward(d, cache.pool_argmax, cache.stem.back().output);
  for (std::size_t i = plan_.stem.size(); i-- > 0;)
    d = back_conv_bn(plan_.stem[i], cache.stem[i], std::move(d), grads, result, options, i > 0);
  return result;
}

template <typename Scalar>
const FeatureMap<Scalar>& Network<Scalar>::activation(const ForwardCache<Scalar>& cache, const std::string& name) const {
  for (std::size_t i = 0; i < plan_.stem.size(); ++i)
    if (plan_.stem[i].conv_name == name) return cache.stem[i].conv_out;
  if (name == "stem") return cache.stem_output;
  for (std::size_t b = 0; b < plan_.blocks.size(); ++b) {
    const auto& plan = plan_.blocks[b];
    const auto& bc = cache.blocks[b];
    if (plan.name == name) return bc.output;
    for (std::size_t i = 0; i < plan.branch.size(); ++i)
      if (plan.branch[i].conv_name == name) return bc.branch[i].conv_out;
    if (plan.projection && plan.projection->conv_name == name) return bc.projection->conv_out;
  }
  if (layer_kind(name) == LayerKind::unknown) fail(Errc::invalid_argument, "unknown layer: " + name);
  fail(Errc::invalid_argument, "not a convolutional layer: " + name);
}

template <typename Scalar>
LayerKind Network<Scalar>::layer_kind(const std::string& name) const {
  if (name == "stem") return LayerKind::stem;
  if (name == "head.fc" || name == "head.gap" || (name == "stem.pool" && plan_.stem_pool)) return LayerKind::other;
  auto check = [&](const ConvBnPlan& l) -> std::optional<LayerKind> {
    if (l.conv_name == name) return LayerKind::conv;
    if (l.bn_name == name) return LayerKind::other;
    return std::nullopt;
  };
  for (const auto& l : plan_.stem)
    if (auto k = check(l)) return *k;
  for (const auto& b : plan_.blocks) {
    if (b.name == name) return LayerKind::block;
    for (const auto& l : b.branch)
      if (auto k = check(l)) return *k;
    if (b.projection)
      if (auto k = check(*b.projection)) return *k;
  }
  return LayerKind::unknown;
}

template <typename Scalar>
std::vector<std::string> Network<Scalar>::conv_layer_names() const {
  std::vector<std::string> names;
  for (const auto& l : plan_.stem) names.push_back(l.conv_name);
  for (const auto& b : plan_.blocks) {
    for (const auto& l : b.branch) names.push_back(l.conv_name);
    if (b.projection) names.push_back(b.projection->conv_name);
  }
  return names;
}

template <typename Scalar>
std::string Network<Scalar>::default_cam_layer() const {
  return plan_.blocks.empty() ? std::string("stem") : plan_.blocks.back().name;
}

template class Network<float>;
template class Network<double>;

}  // namespace skl
