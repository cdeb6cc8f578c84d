#include "skl/model/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skl/metrics.hpp"
#include "skl/model/loss.hpp"
#include "skl/rng.hpp"

namespace skl {

MemorySource::MemorySource(std::vector<ImageTensor> images, std::vector<int> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
  if (images_.empty()) fail(Errc::invalid_argument, "empty data source");
  if (images_.size() != labels_.size()) fail(Errc::shape_mismatch, "image and label counts differ");
  for (const auto& img : images_)
    if (!img.same_shape(images_.front())) fail(Errc::shape_mismatch, "data source images differ in shape");
}

PackSource::PackSource(PackFile pack, std::optional<NormalizationSpec> norm)
    : pack_(std::move(pack)), norm_(norm ? *norm : NormalizationSpec::symmetric(pack_.header().channels)) {
  if (pack_.size() == 0) fail(Errc::invalid_argument, "empty pack");
  norm_.validate(pack_.header().channels);
}

ImageTensor PackSource::image(std::size_t i) const { return normalize(pack_.read_record(i).image, norm_); }

template <typename Scalar>
FeatureMap<Scalar> gather(const DataSource& source, std::span<const std::size_t> indices, std::vector<int>* labels) {
  std::vector<ImageTensor> images;
  images.reserve(indices.size());
  if (labels) labels->clear();
  for (std::size_t i : indices) {
    images.push_back(source.image(i));
    if (labels) labels->push_back(source.label(i));
  }
  return to_feature_map<Scalar>(images);
}

template <typename Scalar>
Trainer<Scalar>::Trainer(Network<Scalar>& net, SolverConfig solver, bool freeze_bn)
    : net_(net),
      solver_(std::move(solver)),
      freeze_bn_(freeze_bn),
      grads_(net.parameters().zeros_like()),
      velocity_(net.parameters().zeros_like()) {
  solver_.validate();
}

template <typename Scalar>
Scalar Trainer<Scalar>::accumulate(const FeatureMap<Scalar>& batch, std::span<const int> labels) {
  ForwardOptions fwd;
  fwd.mode = freeze_bn_ ? Mode::eval : Mode::train;
  const auto cache = net_.forward(batch, fwd);
  const auto loss = softmax_cross_entropy(cache.logits, labels);
  if (!std::isfinite(double(loss.loss)))
    fail(Errc::non_finite, "loss became non-finite at iteration " + std::to_string(iter_));
  const auto back = net_.backward(cache, loss.dlogits);
  if (pending_ == 0) window_start_ = iter_;
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += back.gradients[i];
  ++pending_;
  ++iter_;
  if (pending_ == solver_.iter_size) flush();
  return loss.loss;
}

template <typename Scalar>
bool Trainer<Scalar>::flush() {
  if (pending_ == 0) return false;
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] /= Scalar(pending_);
  sgd_update(net_.mutable_parameters(), grads_, velocity_, solver_, window_start_);
  grads_.set_zero();
  pending_ = 0;
  ++updates_;
  return true;
}

BatchSampler::BatchSampler(std::size_t size, std::uint64_t seed) : size_(size), seed_(seed) {
  if (size_ == 0) fail(Errc::invalid_argument, "cannot sample from an empty set");
}

void BatchSampler::refill() {
  order_.resize(size_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  SeededRng rng = SeededRng(seed_).derive(epoch_++);
  rng.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t count) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (cursor_ == order_.size()) refill();
    out.push_back(order_[cursor_++]);
  }
  return out;
}

template <typename Scalar>
Eigen::MatrixXd predict(const Network<Scalar>& net, const DataSource& source, std::size_t limit, int batch_size) {
  const std::size_t n = limit == 0 ? source.size() : std::min(limit, source.size());
  if (batch_size < 1) fail(Errc::invalid_argument, "batch size must be positive");
  Eigen::MatrixXd probs(Eigen::Index(n), net.config().num_classes);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += std::size_t(batch_size)) {
    idx.resize(std::min(std::size_t(batch_size), n - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto cache = net.forward_eval(gather<Scalar>(source, idx, nullptr));
    probs.middleRows(Eigen::Index(start), Eigen::Index(idx.size())) = softmax(cache.logits).template cast<double>();
  }
  return probs;
}

template <typename Scalar>
EvalResult evaluate(const Network<Scalar>& net, const DataSource& source, std::size_t limit, int batch_size) {
  const Eigen::MatrixXd probs = predict(net, source, limit, batch_size);
  std::vector<int> labels(std::size_t(probs.rows()));
  EvalResult r;
  r.images = probs.rows();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = source.label(i);
    r.loss -= std::log(std::max(probs(Eigen::Index(i), labels[i]), 1e-300));
  }
  if (r.images == 0) return r;
  r.loss /= double(r.images);
  r.top1 = topk_accuracy(probs, labels, 1);
  r.top5 = topk_accuracy(probs, labels, std::min(5, int(probs.cols())));
  return r;
}

TrainResult train(Network<float>& net, const SolverConfig& solver, const DataSource& train_set,
                  const DataSource* validation, const TrainOptions& options) {
  solver.validate();
  const auto& cfg = net.config();
  auto check_dims = [&](const DataSource& s, const char* what) {
    if (s.size() == 0) fail(Errc::invalid_argument, std::string(what) + " set is empty");
    if (s.height() != cfg.input_height || s.width() != cfg.input_width || s.channels() != cfg.input_channels)
      fail(Errc::shape_mismatch, std::string(what) + " images do not match the network input");
  };
  check_dims(train_set, "training");
  if (validation) check_dims(*validation, "validation");

  TrainResult result;
  Trainer<float> trainer(net, solver, options.freeze_bn);
  BatchSampler sampler(train_set.size(), options.seed);
  double loss_sum = 0;
  std::int64_t loss_count = 0;
  double best_top1 = -1;
  std::vector<int> labels;
  for (std::int64_t it = 0; it < solver.max_iter; ++it) {
    const auto idx = sampler.next(std::size_t(solver.batch_size));
    const auto batch = gather<float>(train_set, idx, &labels);
    loss_sum += trainer.accumulate(batch, labels);
    ++loss_count;
    const std::int64_t done = it + 1;
    if (done == solver.max_iter) trainer.flush();
    if (done % solver.test_interval != 0 && done != solver.max_iter) continue;

    LogEntry entry{done, trainer.updates(), lr_at(it, solver), loss_sum / double(loss_count), std::nullopt};
    loss_sum = 0;
    loss_count = 0;
    if (validation)
      entry.validation = evaluate(net, *validation, std::size_t(solver.test_iter), solver.batch_size);
    Checkpoint snap = make_checkpoint(net, done, &trainer.velocity(), solver.lr_mult);
    if (options.on_snapshot) options.on_snapshot(snap, entry);
    if (entry.validation && entry.validation->top1 > best_top1) {
      best_top1 = entry.validation->top1;
      result.best = snap;
      result.best_iteration = done;
    }
    result.log.push_back(entry);
  }
  result.final_state = make_checkpoint<float>(net, trainer.iteration(), solver.max_iter > 0 ? &trainer.velocity() : nullptr,
                                       solver.lr_mult);
  return result;
}

template FeatureMap<float> gather(const DataSource&, std::span<const std::size_t>, std::vector<int>*);
template FeatureMap<double> gather(const DataSource&, std::span<const std::size_t>, std::vector<int>*);
template class Trainer<float>;
template class Trainer<double>;
template Eigen::MatrixXd predict(const Network<float>&, const DataSource&, std::size_t, int);
template Eigen::MatrixXd predict(const Network<double>&, const DataSource&, std::size_t, int);
template EvalResult evaluate(const Network<float>&, const DataSource&, std::size_t, int);
template EvalResult evaluate(const Network<double>&, const DataSource&, std::size_t, int);

}  // namespace skl
