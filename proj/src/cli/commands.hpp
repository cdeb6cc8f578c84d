#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace skl::cli {

namespace fs = std::filesystem;

struct SplitArgs {
  fs::path manifest;
  fs::path out;
  double train = 0.8;
  double val = 0.2;
  double test = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> scope;
};

struct AugmentArgs {
  fs::path manifest;
  fs::path out;
  fs::path output_dir;
  int factor = 29;
  std::uint64_t seed = 0;
  std::vector<std::string> splits{"train", "validation", "unassigned"};
  bool paper_order = false;
  int workers = 1;
  fs::path pipeline;
};

struct PackArgs {
  fs::path manifest;
  fs::path out;
  std::string split = "train";
  int height = 64;
  int width = 64;
  int channels = 3;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  fs::path solver;
  std::string preset = "resnet-tiny";
  fs::path train_pack;
  fs::path val_pack;
  fs::path out_dir = "checkpoints";
  fs::path init;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> max_iter;
  std::optional<std::int64_t> stepsize;
  std::optional<std::int64_t> test_interval;
  std::optional<double> base_lr;
  std::optional<int> num_classes;
  int height = 64;
  int width = 64;
  int channels = 3;
  bool freeze_bn = false;
};

struct EvalArgs {
  fs::path checkpoint;
  fs::path pack;
  fs::path out_dir = "report";
  bool youden = false;
  int batch = 50;
};

struct ExplainArgs {
  fs::path checkpoint;
  fs::path pack;
  fs::path out_dir = "explain";
  std::string mode = "most-wrong";
  std::size_t n = 3;
  std::string layer;
  std::string target = "predicted";
  double alpha = 0.5;
  int batch = 50;
};

void cmd_split(const SplitArgs& a);
void cmd_augment(const AugmentArgs& a);
void cmd_pack(const PackArgs& a);
void cmd_train(const TrainArgs& a);
void cmd_eval(const EvalArgs& a);
void cmd_explain(const ExplainArgs& a);

/// Record-order manifest written next to every pack.
fs::path pack_entries_path(const fs::path& pack);

}  // namespace skl::cli
