#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skl/model/tensor.hpp"

namespace skl {

/// Step-decay SGD with momentum. Iterations count micro-batches: max_iter,
/// stepsize and test_interval are all in forward/backward passes, and one
/// update happens every iter_size of them.
struct SolverConfig {
  double base_lr = 0.01;
  double weight_decay = 0.00001;
  double momentum = 0.9;
  double gamma = 0.1;
  int batch_size = 5;
  int iter_size = 12;
  std::int64_t max_iter = 176180;
  std::int64_t stepsize = 17618;
  std::int64_t test_interval = 2000;
  /// Validation images scored per evaluation (capped at the validation size).
  std::int64_t test_iter = 22023;
  /// (name prefix, multiplier); the longest matching prefix wins.
  std::vector<std::pair<std::string, double>> lr_mult{{"head", 10.0}};

  void validate() const;
  double lr_multiplier(std::string_view param_name) const;
  void set_lr_mult(const std::string& prefix, double value);
};

double lr_at(std::int64_t iter, const SolverConfig& s);

/// `key: value` lines; `#` starts a comment; `lr_mult: <prefix> <value>`
/// may repeat. Unknown keys are errors.
SolverConfig parse_solver(std::string_view text);
std::string to_text(const SolverConfig& s);
SolverConfig read_solver(const std::filesystem::path& path);
void write_solver(const std::filesystem::path& path, const SolverConfig& s);

/// v <- momentum v + lr_at(iter) mult (g + decay p); p <- p - v. Decay only on
/// conv and dense weights; running statistics are never touched. Throws
/// non_finite naming the tensor before modifying anything.
template <typename Scalar>
void sgd_update(TensorSet<Scalar>& params, const TensorSet<Scalar>& grads, TensorSet<Scalar>& velocity,
                const SolverConfig& s, std::int64_t iter);

}  // namespace skl
