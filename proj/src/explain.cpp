#include "skl/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace skl {

Eigen::MatrixXd cam_weighted_sum(const FeatureMap<double>& activation, const FeatureMap<double>& gradient) {
  if (activation.height != gradient.height || activation.width != gradient.width ||
      activation.channels() != gradient.channels() || activation.batch < 1 || gradient.batch < 1)
    fail(Errc::shape_mismatch, "activation and gradient shapes differ");
  const Eigen::Index hw = activation.pixels_per_image();
  const auto a = activation.data.topRows(hw);
  const Eigen::VectorXd alpha = gradient.data.topRows(hw).colwise().mean().transpose();
  const Eigen::VectorXd cam = (a * alpha).cwiseMax(0.0);
  Eigen::MatrixXd map(activation.height, activation.width);
  for (int y = 0; y < activation.height; ++y)
    for (int x = 0; x < activation.width; ++x) map(y, x) = cam(Eigen::Index(y) * activation.width + x);
  const double peak = map.maxCoeff();
  if (peak > 0) map /= peak;
  return map;
}

Eigen::MatrixXd upsample(const Eigen::MatrixXd& map, int height, int width) {
  Image<double> img(int(map.rows()), int(map.cols()), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) img(y, x, 0) = map(y, x);
  const Image<double> big = resize_bilinear(img, height, width);
  Eigen::MatrixXd out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out(y, x) = big(y, x, 0);
  return out;
}

template <typename Scalar>
HeatMap gradcam(const Network<Scalar>& net, const ImageTensor& input, int target_class, std::string layer) {
  if (target_class < 0 || target_class >= net.config().num_classes)
    fail(Errc::out_of_range, "target class " + std::to_string(target_class) + " outside [0, " +
                                 std::to_string(net.config().num_classes) + ")");
  if (layer.empty()) layer = net.default_cam_layer();
  const auto kind = net.layer_kind(layer);
  if (kind == LayerKind::unknown) fail(Errc::invalid_argument, "unknown layer: " + layer);
  if (kind == LayerKind::other) fail(Errc::invalid_argument, "not a convolutional layer: " + layer);

  const std::array<ImageTensor, 1> batch{input};
  const auto cache = net.forward_eval(to_feature_map<Scalar>(batch));
  Matrix<Scalar> dlogits = Matrix<Scalar>::Zero(1, net.config().num_classes);
  dlogits(0, target_class) = Scalar(1);
  BackwardOptions opts;
  opts.capture = {layer};
  const auto back = net.backward(cache, dlogits, opts);

  const auto a = net.activation(cache, layer).template cast<double>();
  const auto g = back.captured.at(layer).template cast<double>();
  HeatMap out;
  out.layer = layer;
  out.target_class = target_class;
  out.coarse = cam_weighted_sum(a, g);
  out.values = upsample(out.coarse, input.height(), input.width());
  return out;
}

namespace {

constexpr std::array<Rgb, 256> kColormap{{
#include "colormap.inc"
}};

}  // namespace

const std::array<Rgb, 256>& colormap() { return kColormap; }

Rgb colormap_at(double v) {
  const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  return kColormap[std::size_t(std::lround(c * 255.0))];
}

ImageTensor overlay(const ImageTensor& original, const Eigen::MatrixXd& map, double alpha) {
  if (map.rows() != original.height() || map.cols() != original.width())
    fail(Errc::shape_mismatch, "heat-map is " + std::to_string(map.rows()) + "x" + std::to_string(map.cols()) +
                                   ", image is " + std::to_string(original.height()) + "x" +
                                   std::to_string(original.width()));
  if (!(alpha >= 0 && alpha <= 1)) fail(Errc::invalid_argument, "alpha must be in [0, 1]");
  const ImageTensor rgb = with_channels(original, 3);
  const int h = rgb.height(), w = rgb.width();
  ImageTensor out(h, 3 * w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb c = colormap_at(map(y, x));
      for (int k = 0; k < 3; ++k) {
        const float src = rgb(y, x, k);
        const float heat = dequantize(c[std::size_t(k)]);
        out(y, x, k) = src;
        out(y, w + x, k) = alpha == 0 ? src : float((1 - alpha) * src + alpha * heat);
        out(y, 2 * w + x, k) = heat;
      }
    }
  return out;
}

std::vector<RankedExample> rank_examples(const Eigen::MatrixXd& probs, std::span<const int> labels,
                                         std::span<const ManifestEntry> entries, RankMode mode, std::size_t n) {
  if (std::size_t(probs.rows()) != labels.size() || (!entries.empty() && entries.size() != labels.size()))
    fail(Errc::shape_mismatch, "scores, labels and entries are not aligned");
  std::vector<RankedExample> picked;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Eigen::Index pred = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(Eigen::Index(i), c) > probs(Eigen::Index(i), pred)) pred = c;
    const bool wrong = pred != labels[i];
    if (wrong != (mode == RankMode::most_wrong)) continue;
    RankedExample ex;
    ex.index = i;
    if (!entries.empty()) ex.entry = entries[i];
    ex.predicted = int(pred);
    ex.truth = labels[i];
    ex.confidence = probs(Eigen::Index(i), pred);
    picked.push_back(std::move(ex));
  }
  std::stable_sort(picked.begin(), picked.end(),
                   [](const RankedExample& a, const RankedExample& b) { return a.confidence > b.confidence; });
  if (picked.size() > n) picked.resize(n);
  return picked;
}

RankMode parse_rank_mode(std::string_view text) {
  if (text == "most-wrong") return RankMode::most_wrong;
  if (text == "most-correct") return RankMode::most_correct;
  fail(Errc::invalid_argument, "rank mode must be most-wrong or most-correct, got " + std::string(text));
}

void write_explanation_sidecar(const std::filesystem::path& path, const RankedExample& example,
                               const HeatMap& map, const std::vector<std::string>& class_names) {
  auto name = [&](int c) { return c >= 0 && std::size_t(c) < class_names.size() ? class_names[c] : std::to_string(c); };
  const nlohmann::json j{{"source", example.entry.path},
                         {"predicted_class", example.predicted},
                         {"predicted_name", name(example.predicted)},
                         {"true_class", example.truth},
                         {"true_name", name(example.truth)},
                         {"confidence", example.confidence},
                         {"target_class", map.target_class},
                         {"layer", map.layer}};
  std::ofstream out(path);
  if (!out) fail(Errc::io_failure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template HeatMap gradcam(const Network<float>&, const ImageTensor&, int, std::string);
template HeatMap gradcam(const Network<double>&, const ImageTensor&, int, std::string);

}  // namespace skl
