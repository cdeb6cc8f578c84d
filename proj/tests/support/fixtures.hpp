#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <unistd.h>
#include <vector>

#include "skl/image.hpp"
#include "skl/manifest.hpp"
#include "skl/rng.hpp"

namespace fixture {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("skl_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline skl::ImageTensor random_image(int h, int w, int c, skl::SeededRng& rng) {
  skl::ImageTensor img(h, w, c);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = float(rng.uniform());
  return img;
}

/// Class 0: a soft bright blob at a random spot. Class 1: stripes at a random
/// angle and phase. Both over mild noise; alternating labels.
inline void blobs_and_stripes(int count, int size, std::uint64_t seed, std::vector<skl::ImageTensor>& images,
                              std::vector<int>& labels) {
  const skl::SeededRng root(seed);
  images.clear();
  labels.clear();
  for (int i = 0; i < count; ++i) {
    skl::SeededRng rng = root.derive(std::uint64_t(i));
    const int label = i % 2;
    skl::ImageTensor img(size, size, 1);
    const double cx = rng.uniform(0.25, 0.75) * size, cy = rng.uniform(0.25, 0.75) * size;
    const double radius = rng.uniform(0.12, 0.22) * size;
    const double angle = rng.uniform(0, std::numbers::pi), period = rng.uniform(4.0, 7.0);
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v;
        if (label == 0) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          v = 0.2 + 0.6 * std::exp(-d2 / (2 * radius * radius));
        } else {
          const double t = x * std::cos(angle) + y * std::sin(angle);
          v = 0.5 + 0.3 * std::sin(2 * std::numbers::pi * t / period + phase);
        }
        v += rng.uniform(-0.05, 0.05);
        img(y, x, 0) = float(std::clamp(v, 0.0, 1.0));
      }
    images.push_back(std::move(img));
    labels.push_back(label);
  }
}

/// Writes `per_class[c]` small PNGs for class c and returns an unassigned manifest.
inline skl::Manifest image_corpus(const std::filesystem::path& dir, const std::vector<int>& per_class, int size,
                                  std::uint64_t seed) {
  std::filesystem::create_directories(dir / "images");
  skl::Manifest m;
  m.base_dir = dir;
  skl::SeededRng rng(seed);
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    m.class_names.push_back("lesion_" + std::to_string(c));
    for (int i = 0; i < per_class[c]; ++i) {
      const std::string rel = "images/c" + std::to_string(c) + "_" + std::to_string(i) + ".png";
      skl::save_image(dir / rel, skl::quantized(random_image(size, size, 3, rng)));
      skl::ManifestEntry e;
      e.path = rel;
      e.class_id = int(c);
      e.class_name = m.class_names.back();
      e.split = skl::Split::unassigned;
      e.origin = skl::Origin::original;
      e.source_tag = "synthetic";
      m.entries.push_back(e);
    }
  }
  return m;
}

/// Score column for one-vs-rest class `cls` whose AUC is exactly
/// 1 - misordered / (positives * negatives): negatives sit at distinct low
/// scores and each positive in turn is sunk below as many of them as are
/// still owed, the rest sit on top.
inline Eigen::VectorXd engineered_column(const std::vector<int>& labels, int cls, int misordered) {
  Eigen::VectorXd col(Eigen::Index(labels.size()));
  int negatives = 0;
  for (int l : labels) negatives += l != cls;
  auto level = [&](double rank) { return 0.1 + 0.5 * rank / (negatives + 1); };
  int neg_rank = 0, owed = misordered;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != cls) {
      col[Eigen::Index(i)] = level(++neg_rank);
    } else {
      const int below = std::min(owed, negatives);
      owed -= below;
      col[Eigen::Index(i)] = below ? level(negatives - below + 0.5) : 0.9;
    }
  }
  return col;
}

}  // namespace fixture
