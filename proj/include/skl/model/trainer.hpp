#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "skl/image.hpp"
#include "skl/model/checkpoint.hpp"
#include "skl/model/network.hpp"
#include "skl/model/solver.hpp"
#include "skl/pack.hpp"

namespace skl {

/// Random-access labelled images, already in network input space.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual ImageTensor image(std::size_t i) const = 0;
  virtual int height() const = 0;
  virtual int width() const = 0;
  virtual int channels() const = 0;
};

class MemorySource final : public DataSource {
 public:
  MemorySource(std::vector<ImageTensor> images, std::vector<int> labels);
  std::size_t size() const override { return images_.size(); }
  int label(std::size_t i) const override { return labels_.at(i); }
  ImageTensor image(std::size_t i) const override { return images_.at(i); }
  int height() const override { return images_.front().height(); }
  int width() const override { return images_.front().width(); }
  int channels() const override { return images_.front().channels(); }

 private:
  std::vector<ImageTensor> images_;
  std::vector<int> labels_;
};

/// Pack records normalized on read.
class PackSource final : public DataSource {
 public:
  explicit PackSource(PackFile pack, std::optional<NormalizationSpec> norm = std::nullopt);
  std::size_t size() const override { return pack_.size(); }
  int label(std::size_t i) const override { return pack_.class_id(i); }
  ImageTensor image(std::size_t i) const override;
  int height() const override { return pack_.header().height; }
  int width() const override { return pack_.header().width; }
  int channels() const override { return pack_.header().channels; }
  const PackFile& pack() const noexcept { return pack_; }

 private:
  PackFile pack_;
  NormalizationSpec norm_;
};

template <typename Scalar>
FeatureMap<Scalar> gather(const DataSource& source, std::span<const std::size_t> indices, std::vector<int>* labels);

/// Accumulates micro-batch gradients and applies one SGD update every
/// iter_size micro-batches, averaging over the micro-batches seen.
template <typename Scalar>
class Trainer {
 public:
  /// With `freeze_bn` the forward pass uses running statistics and never updates them.
  Trainer(Network<Scalar>& net, SolverConfig solver, bool freeze_bn = false);

  /// Forward/backward on one micro-batch; steps when the window is full.
  /// Returns the micro-batch loss.
  Scalar accumulate(const FeatureMap<Scalar>& batch, std::span<const int> labels);
  /// Applies a partial window, if any. Returns whether an update happened.
  bool flush();

  std::int64_t iteration() const noexcept { return iter_; }
  std::int64_t updates() const noexcept { return updates_; }
  int pending() const noexcept { return pending_; }
  const TensorSet<Scalar>& velocity() const noexcept { return velocity_; }
  TensorSet<Scalar>& mutable_velocity() noexcept { return velocity_; }
  const SolverConfig& solver() const noexcept { return solver_; }

 private:
  Network<Scalar>& net_;
  SolverConfig solver_;
  bool freeze_bn_;
  TensorSet<Scalar> grads_;
  TensorSet<Scalar> velocity_;
  int pending_ = 0;
  std::int64_t iter_ = 0;
  std::int64_t window_start_ = 0;
  std::int64_t updates_ = 0;
};

/// Epoch-wise seeded permutations, concatenated.
class BatchSampler {
 public:
  BatchSampler(std::size_t size, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t count);

 private:
  void refill();
  std::size_t size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct EvalResult {
  double top1 = 0;
  double top5 = 0;
  double loss = 0;
  std::int64_t images = 0;
};

/// Class probabilities for the first `limit` images (0 = all), eval mode.
template <typename Scalar>
Eigen::MatrixXd predict(const Network<Scalar>& net, const DataSource& source, std::size_t limit, int batch_size);

template <typename Scalar>
EvalResult evaluate(const Network<Scalar>& net, const DataSource& source, std::size_t limit, int batch_size);

struct LogEntry {
  std::int64_t iteration = 0;
  std::int64_t updates = 0;
  double lr = 0;
  double train_loss = 0;  ///< mean micro-batch loss since the previous entry
  std::optional<EvalResult> validation;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  bool freeze_bn = false;
  std::function<void(const Checkpoint&, const LogEntry&)> on_snapshot;
};

struct TrainResult {
  Checkpoint final_state;
  std::vector<LogEntry> log;
  std::optional<Checkpoint> best;  ///< highest validation top-1
  std::int64_t best_iteration = -1;
};

/// Runs max_iter micro-iterations, evaluating and snapshotting every
/// test_interval of them and at the end.
TrainResult train(Network<float>& net, const SolverConfig& solver, const DataSource& train_set,
                  const DataSource* validation, const TrainOptions& options = {});

}  // namespace skl
