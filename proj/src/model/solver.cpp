#include "skl/model/solver.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace skl {

void SolverConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(Errc::invalid_argument, std::string("solver: ") + what);
  };
  need(std::isfinite(base_lr) && base_lr > 0, "base_lr must be positive");
  need(std::isfinite(weight_decay) && weight_decay >= 0, "weight_decay must be non-negative");
  need(std::isfinite(momentum) && momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
  need(std::isfinite(gamma) && gamma > 0, "gamma must be positive");
  need(batch_size >= 1, "batch_size must be at least 1");
  need(iter_size >= 1, "iter_size must be at least 1");
  need(max_iter >= 0, "max_iter must be non-negative");
  need(stepsize >= 1, "stepsize must be positive");
  need(max_iter == 0 || stepsize <= max_iter, "stepsize exceeds max_iter");
  need(test_interval >= 1, "test_interval must be positive");
  need(test_iter >= 1, "test_iter must be positive");
  for (const auto& [prefix, value] : lr_mult)
    need(!prefix.empty() && std::isfinite(value) && value >= 0, "lr_mult needs a prefix and a non-negative value");
}

double SolverConfig::lr_multiplier(std::string_view name) const {
  double mult = 1.0;
  std::size_t best = 0;
  for (const auto& [prefix, value] : lr_mult) {
    if (!name.starts_with(prefix) || prefix.size() < best) continue;
    // whole path components only: "head" matches "head.fc.weight", not "header"
    if (name.size() != prefix.size() && name[prefix.size()] != '.' && prefix.back() != '.') continue;
    best = prefix.size();
    mult = value;
  }
  return mult;
}

void SolverConfig::set_lr_mult(const std::string& prefix, double value) {
  for (auto& entry : lr_mult)
    if (entry.first == prefix) {
      entry.second = value;
      return;
    }
  lr_mult.emplace_back(prefix, value);
}

double lr_at(std::int64_t iter, const SolverConfig& s) {
  // repeated multiplication keeps 0.01 * 0.1^k on the decimal grid
  double lr = s.base_lr;
  for (std::int64_t k = iter / s.stepsize; k > 0 && lr != 0.0; --k) lr *= s.gamma;
  return lr;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(std::string_view text, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    fail(Errc::invalid_argument, "solver: bad value for " + key + ": '" + std::string(text) + "'");
  return value;
}

}  // namespace

SolverConfig parse_solver(std::string_view text) {
  SolverConfig s;
  s.lr_mult.clear();
  bool saw_mult = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos)
      fail(Errc::invalid_argument, "solver line " + std::to_string(line_no) + ": expected 'key: value'");
    const std::string key(trim(line.substr(0, colon)));
    const std::string_view value = trim(line.substr(colon + 1));
    if (key == "base_lr") s.base_lr = parse_number<double>(value, key);
    else if (key == "weight_decay") s.weight_decay = parse_number<double>(value, key);
    else if (key == "momentum") s.momentum = parse_number<double>(value, key);
    else if (key == "gamma") s.gamma = parse_number<double>(value, key);
    else if (key == "batch_size") s.batch_size = parse_number<int>(value, key);
    else if (key == "iter_size") s.iter_size = parse_number<int>(value, key);
    else if (key == "max_iter") s.max_iter = parse_number<std::int64_t>(value, key);
    else if (key == "stepsize") s.stepsize = parse_number<std::int64_t>(value, key);
    else if (key == "test_interval") s.test_interval = parse_number<std::int64_t>(value, key);
    else if (key == "test_iter") s.test_iter = parse_number<std::int64_t>(value, key);
    else if (key == "lr_mult") {
      const auto space = value.find_first_of(" \t");
      if (space == std::string_view::npos)
        fail(Errc::invalid_argument, "solver line " + std::to_string(line_no) + ": lr_mult needs '<prefix> <value>'");
      s.set_lr_mult(std::string(value.substr(0, space)), parse_number<double>(trim(value.substr(space)), key));
      saw_mult = true;
    } else {
      fail(Errc::invalid_argument, "solver line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!saw_mult) s.lr_mult = SolverConfig{}.lr_mult;
  s.validate();
  return s;
}

std::string to_text(const SolverConfig& s) {
  std::ostringstream out;
  out.precision(17);
  out << "base_lr: " << s.base_lr << '\n'
      << "weight_decay: " << s.weight_decay << '\n'
      << "momentum: " << s.momentum << '\n'
      << "gamma: " << s.gamma << '\n'
      << "batch_size: " << s.batch_size << '\n'
      << "max_iter: " << s.max_iter << '\n'
      << "test_iter: " << s.test_iter << '\n'
      << "test_interval: " << s.test_interval << '\n'
      << "stepsize: " << s.stepsize << '\n'
      << "iter_size: " << s.iter_size << '\n';
  for (const auto& [prefix, value] : s.lr_mult) out << "lr_mult: " << prefix << ' ' << value << '\n';
  return out.str();
}

SolverConfig read_solver(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::file_not_found, "cannot open solver config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_solver(buf.str());
}

void write_solver(const std::filesystem::path& path, const SolverConfig& s) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_failure, "cannot write " + path.string());
  out << to_text(s);
}

template <typename Scalar>
void sgd_update(TensorSet<Scalar>& params, const TensorSet<Scalar>& grads, TensorSet<Scalar>& velocity,
                const SolverConfig& s, std::int64_t iter) {
  if (grads.size() != params.size() || velocity.size() != params.size())
    fail(Errc::shape_mismatch, "gradient/velocity sets do not match the parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.info(i).learnable()) continue;
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      fail(Errc::shape_mismatch, "gradient shape differs for " + params.info(i).name);
    if (!grads[i].allFinite()) fail(Errc::non_finite, "non-finite gradient in " + params.info(i).name);
  }
  const double lr = lr_at(iter, s);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& info = params.info(i);
    if (!info.learnable()) continue;
    const Scalar eff = Scalar(lr * s.lr_multiplier(info.name));
    const Scalar mom = Scalar(s.momentum);
    if (info.decays())
      velocity[i] = mom * velocity[i] + eff * (grads[i] + Scalar(s.weight_decay) * params[i]);
    else
      velocity[i] = mom * velocity[i] + eff * grads[i];
    params[i] -= velocity[i];
  }
}

template void sgd_update(TensorSet<float>&, const TensorSet<float>&, TensorSet<float>&, const SolverConfig&,
                         std::int64_t);
template void sgd_update(TensorSet<double>&, const TensorSet<double>&, TensorSet<double>&, const SolverConfig&,
                         std::int64_t);

}  // namespace skl
