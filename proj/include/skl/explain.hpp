#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "skl/image.hpp"
#include "skl/manifest.hpp"
#include "skl/model/network.hpp"

namespace skl {

struct HeatMap {
  std::string layer;
  int target_class = 0;
  Eigen::MatrixXd coarse;  ///< at the layer's resolution, normalized by its max
  Eigen::MatrixXd values;  ///< bilinearly upsampled to the input dims
};

/// relu(sum_k alpha_k A_k) / max with alpha_k the spatial mean of channel k of
/// the gradient. Image 0 of the batch is used. All-zero maps stay all zero.
Eigen::MatrixXd cam_weighted_sum(const FeatureMap<double>& activation, const FeatureMap<double>& gradient);

/// `input` is one image in network input space. An empty layer name picks
/// the network's default (output of the last residual block).
template <typename Scalar>
HeatMap gradcam(const Network<Scalar>& net, const ImageTensor& input, int target_class, std::string layer = {});

Eigen::MatrixXd upsample(const Eigen::MatrixXd& map, int height, int width);

using Rgb = std::array<std::uint8_t, 3>;
/// Fixed 256-entry blue-to-red table.
const std::array<Rgb, 256>& colormap();
Rgb colormap_at(double v);

/// Original | (1 - alpha) original + alpha colormap(map) | colormap(map),
/// side by side. Gray originals are shown as RGB.
ImageTensor overlay(const ImageTensor& original, const Eigen::MatrixXd& map, double alpha);

enum class RankMode { most_wrong, most_correct };

struct RankedExample {
  std::size_t index = 0;  ///< row in the score matrix
  ManifestEntry entry;
  int predicted = 0;
  int truth = 0;
  double confidence = 0;  ///< probability of the predicted class
};

/// Misclassified (or correctly classified) rows by predicted-class confidence,
/// highest first, ties in row order; at most n.
std::vector<RankedExample> rank_examples(const Eigen::MatrixXd& probs, std::span<const int> labels,
                                         std::span<const ManifestEntry> entries, RankMode mode, std::size_t n);

RankMode parse_rank_mode(std::string_view text);

/// Predicted class, confidence and target class next to a rendered panel.
void write_explanation_sidecar(const std::filesystem::path& path, const RankedExample& example,
                               const HeatMap& map, const std::vector<std::string>& class_names);

}  // namespace skl
