#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "skl/image.hpp"
#include "skl/manifest.hpp"
#include "skl/rng.hpp"

namespace skl {

struct Rotation {
  double max_degrees = 45.0;
};
struct RandomZoom {
  double min_scale = 1.0;
  double max_scale = 1.3;
};
struct FlipHorizontal {};
struct FlipVertical {};
struct RandomDistortion {
  int grid_rows = 4;
  int grid_cols = 4;
  double magnitude = 8.0;  ///< max per-node displacement in pixels
};
struct LightingVariance {
  double min_gain = 0.7;
  double max_gain = 1.3;
  double min_gamma = 0.8;
  double max_gamma = 1.25;
};

using AugmentParams =
    std::variant<Rotation, RandomZoom, FlipHorizontal, FlipVertical, RandomDistortion, LightingVariance>;

enum class AugmentKind { rotation, random_zoom, flip_horizontal, flip_vertical, random_distortion, lighting_variance };

std::string_view to_string(AugmentKind kind) noexcept;

struct AugmentOp {
  double probability = 1.0;
  AugmentParams params;

  AugmentKind kind() const noexcept { return static_cast<AugmentKind>(params.index()); }
  void validate() const;
};

struct AugmentPipeline {
  std::vector<AugmentOp> ops;
};

/// The six-transform pipeline, in table order with the table's probabilities.
AugmentPipeline default_pipeline();

/// [{"op": "rotation", "probability": 0.5, "max_degrees": 45}, ...]; omitted
/// parameters keep their defaults.
AugmentPipeline pipeline_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AugmentPipeline& pipeline);

/// Fires with op.probability; magnitudes are drawn from the op's ranges only
/// when it fires. Geometry ops resample back into the input frame.
ImageTensor apply_op(const AugmentOp& op, const ImageTensor& img, SeededRng& rng);

/// Op k draws from rng.derive(k), so inserting an op never perturbs the draws
/// of the ops before it.
ImageTensor run_pipeline(const AugmentPipeline& pipeline, const ImageTensor& img, const SeededRng& rng);

/// Fixed-magnitude transforms, exposed for tests and tools.
ImageTensor rotate(const ImageTensor& img, double degrees);
ImageTensor zoom(const ImageTensor& img, double scale);
ImageTensor flip_horizontal(const ImageTensor& img);
ImageTensor flip_vertical(const ImageTensor& img);
/// `dx`/`dy` hold one displacement per control node, row-major rows x cols.
ImageTensor grid_distort(const ImageTensor& img, int rows, int cols, std::span<const double> dx,
                         std::span<const double> dy);
ImageTensor adjust_lighting(const ImageTensor& img, double gain, double gamma);

struct AugmentCorpusOptions {
  Split split = Split::train;
  int factor = 29;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  ChannelPolicy channels = ChannelPolicy::keep;
  int workers = 1;
};

/// Adds `factor` augmented children after every original entry of the split,
/// writing `<parent-stem>_aug<k>.png` (k = 1..factor) into output_dir. The
/// result is a pure function of (manifest, options minus workers).
Manifest augment_corpus(const Manifest& manifest, const AugmentPipeline& pipeline,
                        const AugmentCorpusOptions& options);

}  // namespace skl
