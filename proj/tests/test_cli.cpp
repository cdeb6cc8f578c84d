#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "skl/cli.hpp"
#include "skl/model/checkpoint.hpp"
#include "skl/model/trainer.hpp"
#include "skl/pack.hpp"
#include "skl/split.hpp"
#include "support/fixtures.hpp"

using namespace skl;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "skl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(int(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return std::size_t(std::count(s.begin(), s.end(), '\n'));
}

std::size_t count_ext(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST(Cli, SplitEightTwoAndDeterministic) {
  fixture::TempDir dir("cli_split");
  write_manifest(dir / "m.jsonl", fixture::image_corpus(dir.path(), {10}, 4, 1));
  ASSERT_EQ(run({"split", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "a.jsonl").string(), "--train",
                 "0.8", "--val", "0.2", "--seed", "7"}),
            0);
  Manifest a = read_manifest(dir / "a.jsonl");
  EXPECT_EQ(class_histogram(a, Split::train).total, 8u);
  EXPECT_EQ(class_histogram(a, Split::validation).total, 2u);
  ASSERT_EQ(run({"split", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "b.jsonl").string(), "--train",
                 "0.8", "--val", "0.2", "--seed", "7"}),
            0);
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
}

TEST(Cli, BadInputsExitTwo) {
  fixture::TempDir dir("cli_bad");
  write_manifest(dir / "m.jsonl", fixture::image_corpus(dir.path(), {4}, 4, 1));
  EXPECT_EQ(run({"split", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "o.jsonl").string(), "--train",
                 "0.9", "--val", "0.2"}),
            2);
  EXPECT_FALSE(fs::exists(dir / "o.jsonl"));
  EXPECT_EQ(run({"split", "--manifest", (dir / "missing.jsonl").string(), "--out", (dir / "o.jsonl").string()}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST(Cli, AugmentThirtyTimesAndRepeatable) {
  fixture::TempDir dir("cli_aug");
  Manifest m = fixture::image_corpus(dir.path(), {10}, 8, 2);
  for (auto& e : m.entries) e.split = Split::train;
  write_manifest(dir / "m.jsonl", m);
  ASSERT_EQ(run({"augment", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "a" / "aug.jsonl").string(),
                 "--factor", "29", "--seed", "3"}),
            0);
  Manifest out = read_manifest(dir / "a" / "aug.jsonl");
  EXPECT_EQ(out.entries.size(), 300u);
  for (const auto& e : out.entries) EXPECT_TRUE(fs::exists(out.resolve(e))) << e.path;

  ASSERT_EQ(run({"augment", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "b" / "aug.jsonl").string(),
                 "--factor", "29", "--seed", "3", "--workers", "2"}),
            0);
  Manifest again = read_manifest(dir / "b" / "aug.jsonl");
  ASSERT_EQ(again.entries.size(), 300u);
  for (std::size_t i = 0; i < 300; ++i)
    if (out.entries[i].origin == Origin::augmented) {
      ASSERT_EQ(slurp(out.resolve(out.entries[i])), slurp(again.resolve(again.entries[i]))) << i;
    }

  ASSERT_EQ(run({"augment", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "z.jsonl").string(), "--factor",
                 "0"}),
            0);
  EXPECT_EQ(read_manifest(dir / "z.jsonl").entries.size(), 10u);
  EXPECT_EQ(run({"augment", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "n.jsonl").string(), "--factor",
                 "-1"}),
            2);
}

TEST(Cli, AugmentBeforeSplitOrder) {
  fixture::TempDir dir("cli_paper");
  write_manifest(dir / "m.jsonl", fixture::image_corpus(dir.path(), {4, 3}, 6, 4));
  ASSERT_EQ(run({"augment", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "p.jsonl").string(), "--factor",
                 "2", "--paper-order"}),
            0);
  Manifest pool = read_manifest(dir / "p.jsonl");
  EXPECT_EQ(pool.entries.size(), 21u);
  ASSERT_EQ(run({"split", "--manifest", (dir / "p.jsonl").string(), "--out", (dir / "s.jsonl").string()}), 0);
  EXPECT_EQ(class_histogram(read_manifest(dir / "s.jsonl"), Split::train).total, 17u);  // 10 of 12 + 7 of 9
}

TEST(Cli, TrainEvalExplainPipeline) {
  fixture::TempDir dir("cli_pipe");
  Manifest m = fixture::image_corpus(dir.path(), {6, 6, 5}, 10, 5);
  write_manifest(dir / "m.jsonl", m);
  ASSERT_EQ(run({"split", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "s.jsonl").string(), "--train",
                 "0.5", "--val", "0.5"}),
            0);
  for (std::string split : {"train", "validation"})
    ASSERT_EQ(run({"pack", "--manifest", (dir / "s.jsonl").string(), "--out", (dir / (split + ".sklp")).string(),
                   "--split", split, "--height", "8", "--width", "8"}),
              0);

  write_solver(dir / "solver.cfg", SolverConfig{});
  ASSERT_EQ(run({"train", "--solver", (dir / "solver.cfg").string(), "--preset", "resnet-tiny", "--max-iter", "0",
                 "--out-dir", (dir / "init").string(), "--height", "8", "--width", "8", "--num-classes", "3"}),
            0);
  EXPECT_TRUE(fs::exists(dir / "init" / "initial.skck"));
  EXPECT_FALSE(fs::exists(dir / "init" / "final.skck"));

  ASSERT_EQ(run({"train", "--train-pack", (dir / "train.sklp").string(), "--val-pack", (dir / "validation.sklp").string(),
                 "--max-iter", "4", "--test-interval", "2", "--out-dir", (dir / "run").string(), "--seed", "1"}),
            0);
  for (std::string f : {"iter_2.skck", "iter_4.skck", "final.skck", "best.skck", "train_log.jsonl", "solver.cfg"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  EXPECT_EQ(lines(dir / "run" / "train_log.jsonl"), 2u);
  EXPECT_EQ(load_checkpoint(dir / "run" / "final.skck").iteration, 4);

  ASSERT_EQ(run({"eval", "--checkpoint", (dir / "run" / "final.skck").string(), "--pack",
                 (dir / "validation.sklp").string(), "--out-dir", (dir / "report").string()}),
            0);
  EXPECT_EQ(lines(dir / "report" / "report.jsonl"), 3u);
  const std::string report = slurp(dir / "report" / "report.txt");
  for (std::string name : {"lesion_0", "lesion_1", "lesion_2"}) EXPECT_NE(report.find(name), std::string::npos);

  // how many validation images does this checkpoint get wrong?
  const Checkpoint ckpt = load_checkpoint(dir / "run" / "final.skck");
  const PackSource val(PackFile::open(dir / "validation.sklp"));
  const Eigen::MatrixXd probs = predict(instantiate<float>(ckpt), val, 0, 4);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    Eigen::Index pred;
    probs.row(Eigen::Index(i)).maxCoeff(&pred);
    wrong += pred != val.label(i);
  }
  ASSERT_EQ(run({"explain", "--checkpoint", (dir / "run" / "final.skck").string(), "--pack",
                 (dir / "validation.sklp").string(), "--mode", "most-wrong", "--n", "3", "--out-dir",
                 (dir / "cams").string()}),
            0);
  EXPECT_EQ(count_ext(dir / "cams", ".png"), std::min<std::size_t>(3, wrong));

  ASSERT_EQ(run({"train", "--init", (dir / "run" / "final.skck").string(), "--num-classes", "5", "--height", "8",
                 "--width", "8", "--max-iter", "0", "--out-dir", (dir / "ft").string()}),
            0);
  EXPECT_EQ(load_checkpoint(dir / "ft" / "initial.skck").config.num_classes, 5);
}
