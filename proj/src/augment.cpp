#include "skl/augment.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <numbers>
#include <set>
#include <thread>

namespace skl {

std::string_view to_string(AugmentKind kind) noexcept {
  switch (kind) {
    case AugmentKind::rotation: return "rotation";
    case AugmentKind::random_zoom: return "random_zoom";
    case AugmentKind::flip_horizontal: return "flip_horizontal";
    case AugmentKind::flip_vertical: return "flip_vertical";
    case AugmentKind::random_distortion: return "random_distortion";
    case AugmentKind::lighting_variance: return "lighting_variance";
  }
  return "unknown";
}

AugmentPipeline pipeline_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(Errc::invalid_argument, "pipeline spec must be a JSON array");
  AugmentPipeline p;
  try {
    for (const auto& item : j) {
      const std::string op = item.at("op").get<std::string>();
      AugmentOp spec;
      spec.probability = item.value("probability", 1.0);
      if (op == "rotation") {
        Rotation r;
        r.max_degrees = item.value("max_degrees", r.max_degrees);
        spec.params = r;
      } else if (op == "random_zoom") {
        RandomZoom z;
        z.min_scale = item.value("min_scale", z.min_scale);
        z.max_scale = item.value("max_scale", z.max_scale);
        spec.params = z;
      } else if (op == "flip_horizontal") {
        spec.params = FlipHorizontal{};
      } else if (op == "flip_vertical") {
        spec.params = FlipVertical{};
      } else if (op == "random_distortion") {
        RandomDistortion d;
        d.grid_rows = item.value("grid_rows", d.grid_rows);
        d.grid_cols = item.value("grid_cols", d.grid_cols);
        d.magnitude = item.value("magnitude", d.magnitude);
        spec.params = d;
      } else if (op == "lighting_variance") {
        LightingVariance l;
        l.min_gain = item.value("min_gain", l.min_gain);
        l.max_gain = item.value("max_gain", l.max_gain);
        l.min_gamma = item.value("min_gamma", l.min_gamma);
        l.max_gamma = item.value("max_gamma", l.max_gamma);
        spec.params = l;
      } else {
        fail(Errc::invalid_argument, "unknown augmentation op: " + op);
      }
      spec.validate();
      p.ops.push_back(spec);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_argument, std::string("pipeline spec: ") + e.what());
  }
  return p;
}

nlohmann::json to_json(const AugmentPipeline& pipeline) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& op : pipeline.ops) {
    nlohmann::json j{{"op", to_string(op.kind())}, {"probability", op.probability}};
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Rotation>) {
            j["max_degrees"] = p.max_degrees;
          } else if constexpr (std::is_same_v<T, RandomZoom>) {
            j["min_scale"] = p.min_scale;
            j["max_scale"] = p.max_scale;
          } else if constexpr (std::is_same_v<T, RandomDistortion>) {
            j["grid_rows"] = p.grid_rows;
            j["grid_cols"] = p.grid_cols;
            j["magnitude"] = p.magnitude;
          } else if constexpr (std::is_same_v<T, LightingVariance>) {
            j["min_gain"] = p.min_gain;
            j["max_gain"] = p.max_gain;
            j["min_gamma"] = p.min_gamma;
            j["max_gamma"] = p.max_gamma;
          }
        },
        op.params);
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// Reflect-101 border: -1 -> 1, n -> n-2.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Bilinear sample at continuous index coordinates (pixel centers on integers).
void sample_into(const ImageTensor& img, double fy, double fx, ImageTensor& out, int oy, int ox) {
  const int h = img.height(), w = img.width();
  const double fy0 = std::floor(fy), fx0 = std::floor(fx);
  const double wy = fy - fy0, wx = fx - fx0;
  const int y0 = reflect(int(fy0), h), y1 = reflect(int(fy0) + 1, h);
  const int x0 = reflect(int(fx0), w), x1 = reflect(int(fx0) + 1, w);
  for (int c = 0; c < img.channels(); ++c) {
    double top = (1 - wx) * img(y0, x0, c) + wx * img(y0, x1, c);
    double bot = (1 - wx) * img(y1, x0, c) + wx * img(y1, x1, c);
    out(oy, ox, c) = float(std::clamp((1 - wy) * top + wy * bot, 0.0, 1.0));
  }
}

// Resamples through an inverse map from output pixel-center coordinates
// (x + 0.5, y + 0.5) to source pixel-center coordinates.
template <typename InverseMap>
ImageTensor warp(const ImageTensor& img, InverseMap&& inverse) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      auto [sx, sy] = inverse(x + 0.5, y + 0.5);
      sample_into(img, sy - 0.5, sx - 0.5, out, y, x);
    }
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) fail(Errc::invalid_argument, what);
}

}  // namespace

void AugmentOp::validate() const {
  require(probability >= 0.0 && probability <= 1.0, "augment probability must lie in [0, 1]");
  std::visit(overloaded{
                 [](const Rotation& p) { require(p.max_degrees >= 0, "rotation max-degrees must be >= 0"); },
                 [](const RandomZoom& p) {
                   require(p.min_scale > 0 && p.min_scale <= p.max_scale, "zoom needs 0 < min <= max");
                 },
                 [](const FlipHorizontal&) {},
                 [](const FlipVertical&) {},
                 [](const RandomDistortion& p) {
                   require(p.grid_rows >= 2 && p.grid_cols >= 2, "distortion grid needs at least 2x2 nodes");
                   require(p.magnitude >= 0, "distortion magnitude must be >= 0");
                 },
                 [](const LightingVariance& p) {
                   require(p.min_gain > 0 && p.min_gain <= p.max_gain, "gain range must be positive and ordered");
                   require(p.min_gamma > 0 && p.min_gamma <= p.max_gamma, "gamma range must be positive and ordered");
                 },
             },
             params);
}

AugmentPipeline default_pipeline() {
  return {{
      {0.5, Rotation{}},
      {0.4, RandomZoom{}},
      {0.7, FlipHorizontal{}},
      {0.5, FlipVertical{}},
      {0.8, RandomDistortion{}},
      {0.5, LightingVariance{}},
  }};
}

ImageTensor rotate(const ImageTensor& img, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cx = img.width() / 2.0, cy = img.height() / 2.0;
  return warp(img, [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return std::pair{cx + c * dx + s * dy, cy - s * dx + c * dy};
  });
}

ImageTensor zoom(const ImageTensor& img, double scale) {
  if (!(scale > 0)) fail(Errc::invalid_argument, "zoom scale must be positive");
  const double cx = img.width() / 2.0, cy = img.height() / 2.0;
  return warp(img, [&](double x, double y) { return std::pair{cx + (x - cx) / scale, cy + (y - cy) / scale}; });
}

ImageTensor flip_horizontal(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) = img(y, img.width() - 1 - x, c);
  return out;
}

ImageTensor flip_vertical(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) = img(img.height() - 1 - y, x, c);
  return out;
}

ImageTensor grid_distort(const ImageTensor& img, int rows, int cols, std::span<const double> dx,
                         std::span<const double> dy) {
  if (rows < 2 || cols < 2) fail(Errc::invalid_argument, "distortion grid needs at least 2x2 nodes");
  if (dx.size() != std::size_t(rows) * cols || dy.size() != dx.size())
    fail(Errc::shape_mismatch, "distortion displacement count must equal rows * cols");
  const int h = img.height(), w = img.width();
  // Control nodes span the pixel-center lattice corner to corner; the dense
  // field is the bilinear interpolation of the node displacements.
  auto field = [&](std::span<const double> d, double px, double py) {
    const double gx = w > 1 ? px * (cols - 1) / (w - 1) : 0.0;
    const double gy = h > 1 ? py * (rows - 1) / (h - 1) : 0.0;
    const int j0 = std::min(int(gx), cols - 2), i0 = std::min(int(gy), rows - 2);
    const double tx = gx - j0, ty = gy - i0;
    auto at = [&](int i, int j) { return d[std::size_t(i) * cols + j]; };
    return (1 - ty) * ((1 - tx) * at(i0, j0) + tx * at(i0, j0 + 1)) +
           ty * ((1 - tx) * at(i0 + 1, j0) + tx * at(i0 + 1, j0 + 1));
  };
  return warp(img, [&](double x, double y) {
    const double px = x - 0.5, py = y - 0.5;
    return std::pair{x + field(dx, px, py), y + field(dy, px, py)};
  });
}

ImageTensor adjust_lighting(const ImageTensor& img, double gain, double gamma) {
  ImageTensor out = img;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double v = img.data()[i];
    out.data()[i] = float(std::clamp(gain * std::pow(v, gamma), 0.0, 1.0));
  }
  return out;
}

ImageTensor apply_op(const AugmentOp& op, const ImageTensor& img, SeededRng& rng) {
  op.validate();
  if (!(rng.uniform() < op.probability)) return img;
  return std::visit(
      overloaded{
          [&](const Rotation& p) { return rotate(img, rng.uniform(-p.max_degrees, p.max_degrees)); },
          [&](const RandomZoom& p) { return zoom(img, rng.uniform(p.min_scale, p.max_scale)); },
          [&](const FlipHorizontal&) { return flip_horizontal(img); },
          [&](const FlipVertical&) { return flip_vertical(img); },
          [&](const RandomDistortion& p) {
            const std::size_t nodes = std::size_t(p.grid_rows) * p.grid_cols;
            std::vector<double> dx(nodes), dy(nodes);
            for (std::size_t n = 0; n < nodes; ++n) {
              dx[n] = rng.uniform(-p.magnitude, p.magnitude);
              dy[n] = rng.uniform(-p.magnitude, p.magnitude);
            }
            return grid_distort(img, p.grid_rows, p.grid_cols, dx, dy);
          },
          [&](const LightingVariance& p) {
            const double gain = rng.uniform(p.min_gain, p.max_gain);
            const double gamma = rng.uniform(p.min_gamma, p.max_gamma);
            return adjust_lighting(img, gain, gamma);
          },
      },
      op.params);
}

ImageTensor run_pipeline(const AugmentPipeline& pipeline, const ImageTensor& img, const SeededRng& rng) {
  ImageTensor current = img;
  for (std::size_t k = 0; k < pipeline.ops.size(); ++k) {
    SeededRng op_rng = rng.derive(k);
    current = apply_op(pipeline.ops[k], current, op_rng);
  }
  return current;
}

Manifest augment_corpus(const Manifest& manifest, const AugmentPipeline& pipeline,
                        const AugmentCorpusOptions& options) {
  if (options.factor < 0) fail(Errc::invalid_argument, "augmentation factor must be >= 0");
  for (const auto& op : pipeline.ops) op.validate();
  const Split split = options.split;

  std::vector<std::size_t> parents;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (e.split == split && e.origin == Origin::original) parents.push_back(i);
  }

  Manifest out = manifest;
  out.provenance.push_back("augment split=" + std::string(to_string(split)) +
                           " factor=" + std::to_string(options.factor) + " seed=" + std::to_string(options.seed) +
                           " ops=" + std::to_string(pipeline.ops.size()));
  if (options.factor == 0 || parents.empty()) return out;

  if (options.output_dir.empty()) fail(Errc::invalid_argument, "augmentation needs an output directory");
  std::filesystem::create_directories(options.output_dir);

  std::set<std::string> stems;
  for (std::size_t idx : parents) {
    auto stem = std::filesystem::path(manifest.entries[idx].path).stem().string();
    if (!stems.insert(stem).second)
      fail(Errc::invalid_argument, "two parents share the file stem '" + stem + "'; augmented names would collide");
  }

  auto child_path = [&](std::size_t idx, int k) {
    auto stem = std::filesystem::path(manifest.entries[idx].path).stem().string();
    return options.output_dir / (stem + "_aug" + std::to_string(k) + ".png");
  };

  const SeededRng root(options.seed);
  std::vector<std::exception_ptr> errors(parents.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < parents.size(); t = next++) {
      const std::size_t idx = parents[t];
      try {
        const ImageTensor src = load_image(manifest.resolve(manifest.entries[idx]), options.channels);
        const SeededRng record_rng = root.derive(idx);
        for (int k = 1; k <= options.factor; ++k)
          save_image(child_path(idx, k), run_pipeline(pipeline, src, record_rng.derive(std::uint64_t(k))));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options.workers, int(parents.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  // Report the failure of the earliest record so the message is stable.
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);

  out.entries.clear();
  std::size_t t = 0;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    out.entries.push_back(e);
    if (t < parents.size() && parents[t] == i) {
      for (int k = 1; k <= options.factor; ++k) {
        ManifestEntry child = e;
        child.path = out.relativize(child_path(i, k));
        child.origin = Origin::augmented;
        child.parent = e.path;
        out.entries.push_back(std::move(child));
      }
      ++t;
    }
  }
  return out;
}

}  // namespace skl
