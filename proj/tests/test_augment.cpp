#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <map>

#include <nlohmann/json.hpp>

#include "skl/augment.hpp"
#include "support/fixtures.hpp"

using namespace skl;

namespace {

ImageTensor abcd() {
  ImageTensor img(2, 2, 1);
  img(0, 0, 0) = 0.1f;
  img(0, 1, 0) = 0.2f;
  img(1, 0, 0) = 0.3f;
  img(1, 1, 0) = 0.4f;
  return img;
}

AugmentOp always(AugmentParams p) { return AugmentOp{1.0, std::move(p)}; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Pipeline, DefaultTableOrderAndProbabilities) {
  AugmentPipeline p = default_pipeline();
  ASSERT_EQ(p.ops.size(), 6u);
  const double probs[] = {0.5, 0.4, 0.7, 0.5, 0.8, 0.5};
  const AugmentKind kinds[] = {AugmentKind::rotation,      AugmentKind::random_zoom,
                               AugmentKind::flip_horizontal, AugmentKind::flip_vertical,
                               AugmentKind::random_distortion, AugmentKind::lighting_variance};
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(p.ops[i].probability, probs[i]);
    EXPECT_EQ(p.ops[i].kind(), kinds[i]);
  }
}

TEST(Pipeline, ZeroProbabilityIsIdentity) {
  AugmentPipeline p = default_pipeline();
  for (auto& op : p.ops) op.probability = 0;
  SeededRng rng(1);
  ImageTensor img = fixture::random_image(12, 10, 3, rng);
  for (int s = 0; s < 10; ++s) EXPECT_TRUE(run_pipeline(p, img, SeededRng(s)) == img);
  EXPECT_TRUE(run_pipeline(AugmentPipeline{}, img, SeededRng(3)) == img);
}

TEST(Ops, HorizontalFlipReflects) {
  SeededRng rng(0);
  ImageTensor out = apply_op(always(FlipHorizontal{}), abcd(), rng);
  EXPECT_EQ(out(0, 0, 0), 0.2f);
  EXPECT_EQ(out(0, 1, 0), 0.1f);
  EXPECT_EQ(out(1, 0, 0), 0.4f);
  EXPECT_EQ(out(1, 1, 0), 0.3f);
  EXPECT_TRUE(apply_op(always(FlipHorizontal{}), out, rng) == abcd());
  ImageTensor v = flip_vertical(abcd());
  EXPECT_EQ(v(0, 0, 0), 0.3f);
}

TEST(Ops, ZeroRotationIsIdentity) {
  SeededRng rng(4);
  ImageTensor img = fixture::random_image(9, 13, 3, rng);
  ImageTensor out = apply_op(always(Rotation{0.0}), img, rng);
  EXPECT_LT((out.data() - img.data()).abs().maxCoeff(), 1e-6f);
}

TEST(Ops, FixedLightingIsClampedGain) {
  for (double g : {0.7, 1.0, 1.3})
    for (float v : {0.0f, 0.25f, 0.9f}) {
      SeededRng rng(2);
      ImageTensor img(3, 3, 3, v);
      ImageTensor out = apply_op(always(LightingVariance{g, g, 1.0, 1.0}), img, rng);
      EXPECT_LT((out.data() - float(std::min(1.0, v * g))).abs().maxCoeff(), 1e-6f);
    }
}

TEST(Ops, StayInUnitRange) {
  SeededRng rng(6);
  ImageTensor img = fixture::random_image(16, 16, 3, rng);
  AugmentPipeline p = default_pipeline();
  for (auto& op : p.ops) op.probability = 1.0;
  for (int s = 0; s < 20; ++s) {
    ImageTensor out = run_pipeline(p, img, SeededRng(s));
    ASSERT_TRUE(out.same_shape(img));
    EXPECT_GE(out.data().minCoeff(), 0.0f);
    EXPECT_LE(out.data().maxCoeff(), 1.0f);
  }
}

TEST(Ops, ZoomAndDistortKeepShape) {
  SeededRng rng(7);
  ImageTensor img = fixture::random_image(10, 14, 1, rng);
  EXPECT_TRUE(zoom(img, 1.0).same_shape(img));
  EXPECT_LT((zoom(img, 1.0).data() - img.data()).abs().maxCoeff(), 1e-6f);
  std::vector<double> zeros(16, 0.0);
  ImageTensor d = grid_distort(img, 4, 4, zeros, zeros);
  EXPECT_LT((d.data() - img.data()).abs().maxCoeff(), 1e-6f);
}

TEST(Ops, InvalidParametersRejected) {
  SeededRng rng(0);
  ImageTensor img(4, 4, 1);
  EXPECT_THROW(apply_op(AugmentOp{1.5, FlipHorizontal{}}, img, rng), Error);
  EXPECT_THROW(apply_op(always(RandomZoom{1.3, 1.0}), img, rng), Error);
}

TEST(Pipeline, Deterministic) {
  SeededRng rng(8);
  ImageTensor img = fixture::random_image(20, 20, 3, rng);
  AugmentPipeline p = default_pipeline();
  EXPECT_TRUE(run_pipeline(p, img, SeededRng(99)) == run_pipeline(p, img, SeededRng(99)));
  EXPECT_FALSE(run_pipeline(p, img, SeededRng(99)) == run_pipeline(p, img, SeededRng(100)));
}

TEST(Pipeline, DoubleFlipComposesToIdentity) {
  AugmentPipeline p{{always(FlipHorizontal{}), always(FlipHorizontal{})}};
  EXPECT_TRUE(run_pipeline(p, abcd(), SeededRng(5)) == abcd());
}

TEST(Pipeline, JsonRoundTrip) {
  AugmentPipeline p = default_pipeline();
  AugmentPipeline back = pipeline_from_json(to_json(p));
  EXPECT_EQ(to_json(back), to_json(p));
  auto partial = pipeline_from_json(nlohmann::json::parse(R"([{"op":"rotation","probability":1,"max_degrees":10}])"));
  ASSERT_EQ(partial.ops.size(), 1u);
  EXPECT_EQ(std::get<Rotation>(partial.ops[0].params).max_degrees, 10.0);
  EXPECT_THROW(pipeline_from_json(nlohmann::json::parse(R"([{"op":"warp"}])")), Error);
}

TEST(Corpus, FactorTwentyNineGivesThirtyTimes) {
  fixture::TempDir dir("aug30");
  Manifest m = fixture::image_corpus(dir.path(), {10, 3}, 8, 1);
  for (auto& e : m.entries) e.split = Split::train;
  AugmentCorpusOptions opt;
  opt.factor = 29;
  opt.seed = 5;
  opt.output_dir = dir / "aug";
  Manifest out = augment_corpus(m, default_pipeline(), opt);
  std::map<int, int> per_class;
  std::map<std::string, const ManifestEntry*> by_path;
  for (const auto& e : out.entries) {
    ++per_class[e.class_id];
    by_path[e.path] = &e;
  }
  EXPECT_EQ(per_class[0], 300);
  EXPECT_EQ(per_class[1], 90);
  for (const auto& e : out.entries) {
    if (e.origin == Origin::original) {
      EXPECT_FALSE(e.parent);
      continue;
    }
    ASSERT_TRUE(e.parent);
    ASSERT_TRUE(by_path.count(*e.parent));
    const ManifestEntry* parent = by_path[*e.parent];
    EXPECT_EQ(parent->origin, Origin::original);
    EXPECT_EQ(parent->class_id, e.class_id);
    EXPECT_EQ(parent->split, e.split);
    EXPECT_TRUE(std::filesystem::exists(out.resolve(e)));
  }
  EXPECT_NO_THROW(out.validate());
}

TEST(Corpus, FactorZeroOnlyStamps) {
  fixture::TempDir dir("aug0");
  Manifest m = fixture::image_corpus(dir.path(), {3}, 8, 1);
  for (auto& e : m.entries) e.split = Split::train;
  AugmentCorpusOptions opt;
  opt.factor = 0;
  Manifest out = augment_corpus(m, default_pipeline(), opt);
  EXPECT_EQ(out.entries, m.entries);
  EXPECT_EQ(out.provenance.size(), m.provenance.size() + 1);
}

TEST(Corpus, OnlyTheRequestedSplitGrows) {
  fixture::TempDir dir("augsplit");
  Manifest m = fixture::image_corpus(dir.path(), {3, 3}, 8, 2);
  m.entries[0].split = Split::train;
  m.entries[1].split = Split::train;
  m.entries[2].split = Split::test;
  AugmentCorpusOptions opt;
  opt.factor = 2;
  opt.output_dir = dir / "aug";
  Manifest out = augment_corpus(m, default_pipeline(), opt);
  EXPECT_EQ(out.entries.size(), m.entries.size() + 4);
  for (const auto& e : out.entries)
    if (e.origin == Origin::augmented) EXPECT_EQ(e.split, Split::train);
}

TEST(Corpus, ByteIdenticalAcrossRunsAndWorkers) {
  fixture::TempDir dir("augdet");
  Manifest m = fixture::image_corpus(dir.path(), {3}, 12, 4);
  for (auto& e : m.entries) e.split = Split::train;
  auto run = [&](const std::string& sub, int workers) {
    AugmentCorpusOptions opt;
    opt.factor = 2;
    opt.seed = 77;
    opt.workers = workers;
    opt.output_dir = dir / sub;
    return augment_corpus(m, default_pipeline(), opt);
  };
  Manifest a = run("a", 1), b = run("b", 3);
  ASSERT_EQ(a.entries.size(), 9u);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].origin == Origin::original) continue;
    EXPECT_EQ(slurp(a.resolve(a.entries[i])), slurp(b.resolve(b.entries[i])));
  }
}
