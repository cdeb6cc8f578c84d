#include "skl/model/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "skl/pack.hpp"
#include "skl/rng.hpp"

namespace skl {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'C', 'K'};
constexpr const char* kIteration = "solver.iteration";
constexpr const char* kMomentum = "solver.momentum/";
constexpr const char* kLrMult = "lr_mult/";

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(std::uint8_t((std::uint64_t(value) >> (8 * i)) & 0xFF));
}

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const std::vector<int>& dims,
                const float* data, std::size_t count) {
  put_le(out, std::uint32_t(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_le(out, std::uint32_t(dims.size()));
  for (int d : dims) put_le(out, std::uint32_t(d));
  for (std::size_t i = 0; i < count; ++i) put_le(out, std::bit_cast<std::uint32_t>(data[i]));
}

// Storage matrices are column-major; payloads are written in logical
// row-major order.
void put_matrix(std::vector<std::uint8_t>& out, const std::string& name, const std::vector<int>& dims,
                const Matrix<float>& m) {
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  put_tensor(out, name, dims, rm.data(), std::size_t(rm.size()));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return T(v);
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(Errc::corrupt_stream, "checkpoint truncated");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct RawTensor {
  std::vector<int> dims;
  std::vector<float> values;
};

Matrix<float> to_storage(const RawTensor& t, int rows, int cols) {
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rm(t.values.data(), rows,
                                                                                             cols);
  return rm;
}

}  // namespace

template <typename Scalar>
Checkpoint make_checkpoint(const Network<Scalar>& net, std::int64_t iteration, const TensorSet<Scalar>* momentum,
                           std::vector<std::pair<std::string, double>> lr_mult) {
  Checkpoint ckpt{net.config(), TensorSet<float>(net.parameters().info_ptr()), iteration, std::nullopt,
                  std::move(lr_mult)};
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) ckpt.params[i] = net.parameters()[i].template cast<float>();
  if (momentum) {
    ckpt.momentum.emplace(net.parameters().info_ptr());
    for (std::size_t i = 0; i < momentum->size(); ++i) (*ckpt.momentum)[i] = (*momentum)[i].template cast<float>();
  }
  return ckpt;
}

template <typename Scalar>
void load_into(const Checkpoint& ckpt, Network<Scalar>& net) {
  if (!(ckpt.config == net.config()))
    fail(Errc::shape_mismatch, "checkpoint network differs: " + ckpt.config.canonical() + " vs " +
                                   net.config().canonical());
  auto& params = net.mutable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] = ckpt.params[i].template cast<Scalar>();
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  if (ckpt.iteration < 0 || ckpt.iteration > (std::int64_t(1) << 24))
    fail(Errc::out_of_range, "iteration counter does not fit the f32 payload exactly");
  const auto& infos = ckpt.params.infos();
  std::uint32_t count = std::uint32_t(infos.size() + 1 + ckpt.lr_mult.size());
  if (ckpt.momentum) count += std::uint32_t(infos.size());

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kCheckpointVersion);
  put_le(out, ckpt.config.digest());
  put_le(out, count);
  for (std::size_t i = 0; i < infos.size(); ++i) put_matrix(out, infos[i].name, infos[i].shape, ckpt.params[i]);
  const float iter = float(ckpt.iteration);
  put_tensor(out, kIteration, {}, &iter, 1);
  if (ckpt.momentum)
    for (std::size_t i = 0; i < infos.size(); ++i)
      put_matrix(out, kMomentum + infos[i].name, infos[i].shape, (*ckpt.momentum)[i]);
  for (const auto& [prefix, value] : ckpt.lr_mult) {
    const float v = float(value);
    put_tensor(out, kLrMult + prefix, {}, &v, 1);
  }
  put_le(out, crc32_of(out));
  return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes, const NetworkConfig& config) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(Errc::unsupported_format, "not a checkpoint file");
  Reader trailer(bytes.subspan(bytes.size() - 4));
  if (trailer.get<std::uint32_t>() != crc32_of(bytes.first(bytes.size() - 4)))
    fail(Errc::checksum_mismatch, "checkpoint checksum mismatch");

  Reader in(bytes.subspan(4, bytes.size() - 8));
  if (const auto v = in.get<std::uint32_t>(); v != kCheckpointVersion)
    fail(Errc::unsupported_format, "checkpoint version " + std::to_string(v));
  if (in.get<std::uint64_t>() != config.digest())
    fail(Errc::shape_mismatch, "checkpoint was written for a different network than " + config.canonical());
  const auto count = in.get<std::uint32_t>();

  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = in.get_string(in.get<std::uint32_t>());
    RawTensor raw;
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) fail(Errc::corrupt_stream, "tensor " + name + " has rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      raw.dims.push_back(int(in.get<std::uint32_t>()));
      n *= std::size_t(raw.dims.back());
    }
    in.need(n * 4);
    raw.values.resize(n);
    for (auto& v : raw.values) v = std::bit_cast<float>(in.get<std::uint32_t>());
    if (!tensors.emplace(name, std::move(raw)).second) fail(Errc::corrupt_stream, "duplicate tensor " + name);
  }
  if (!in.done()) fail(Errc::corrupt_stream, "trailing bytes after the last tensor");

  auto infos = std::make_shared<const std::vector<ParamInfo>>(enumerate_parameters(config));
  Checkpoint ckpt{config, TensorSet<float>(infos), 0, std::nullopt, {}};
  auto take = [&](const std::string& name, const ParamInfo& info) {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(Errc::corrupt_stream, "checkpoint lacks tensor " + name);
    if (it->second.dims != info.shape) fail(Errc::shape_mismatch, "tensor " + name + " has the wrong shape");
    Matrix<float> m = to_storage(it->second, info.rows, info.cols);
    tensors.erase(it);
    return m;
  };
  for (std::size_t i = 0; i < infos->size(); ++i) {
    ckpt.params[i] = take((*infos)[i].name, (*infos)[i]);
    if ((*infos)[i].kind == ParamKind::bn_running_var && (ckpt.params[i].array() < 0).any())
      fail(Errc::corrupt_stream, "negative running variance in " + (*infos)[i].name);
  }
  if (tensors.count(kMomentum + infos->front().name)) {
    ckpt.momentum.emplace(infos);
    for (std::size_t i = 0; i < infos->size(); ++i) (*ckpt.momentum)[i] = take(kMomentum + (*infos)[i].name, (*infos)[i]);
  }
  for (auto it = tensors.begin(); it != tensors.end();) {
    const std::string& name = it->first;
    if (!it->second.dims.empty()) fail(Errc::corrupt_stream, "unexpected tensor " + name);
    if (name == kIteration)
      ckpt.iteration = std::int64_t(it->second.values.at(0));
    else if (name.starts_with(kLrMult))
      ckpt.lr_mult.emplace_back(name.substr(std::strlen(kLrMult)), double(it->second.values.at(0)));
    else
      fail(Errc::corrupt_stream, "unexpected tensor " + name);
    it = tensors.erase(it);
  }
  return ckpt;
}

std::filesystem::path config_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_failure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) fail(Errc::io_failure, "short write to " + path.string());
  }
  std::ofstream meta(config_path(path));
  if (!meta) fail(Errc::io_failure, "cannot write " + config_path(path).string());
  meta << to_json(ckpt.config).dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::file_not_found, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, config);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream meta(config_path(path));
  if (!meta) fail(Errc::file_not_found, "missing network config " + config_path(path).string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::corrupt_stream, config_path(path).string() + ": " + e.what());
  }
  return load_checkpoint(path, network_config_from_json(j));
}

Checkpoint replace_head(const Checkpoint& ckpt, const NetworkConfig& target, std::uint64_t seed) {
  target.validate();
  auto infos = std::make_shared<const std::vector<ParamInfo>>(enumerate_parameters(target));
  std::map<std::string, const ParamInfo*> source;
  for (const auto& info : ckpt.params.infos()) source.emplace(info.name, &info);

  std::vector<std::string> bad;
  for (const auto& info : *infos) {
    if (info.in_head()) continue;
    auto it = source.find(info.name);
    if (it == source.end() || it->second->shape != info.shape) bad.push_back(info.name);
    if (it != source.end()) source.erase(it);
  }
  for (const auto& [name, info] : source)
    if (!info->in_head()) bad.push_back(name);
  if (!bad.empty()) {
    std::string list;
    for (const auto& name : bad) list += (list.empty() ? "" : ", ") + name;
    fail(Errc::shape_mismatch, "network bodies differ in: " + list);
  }

  Checkpoint out{target, TensorSet<float>(infos), 0, std::nullopt, ckpt.lr_mult};
  const SeededRng root(seed);
  for (std::size_t i = 0; i < infos->size(); ++i) {
    const auto& info = (*infos)[i];
    if (!info.in_head()) {
      out.params[i] = ckpt.params[info.name];
      continue;
    }
    if (info.kind != ParamKind::dense_weight) continue;  // bias stays zero
    SeededRng rng = root.derive(i);
    const double bound = std::sqrt(6.0 / double(info.cols));
    for (int r = 0; r < info.rows; ++r)
      for (int c = 0; c < info.cols; ++c) out.params[i](r, c) = float(rng.uniform(-bound, bound));
  }
  bool tagged = false;
  for (auto& [prefix, value] : out.lr_mult)
    if (prefix == "head") tagged = true;
  if (!tagged) out.lr_mult.emplace_back("head", 10.0);
  return out;
}

Checkpoint replace_head(const Checkpoint& ckpt, int num_classes, std::uint64_t seed) {
  NetworkConfig target = ckpt.config;
  target.num_classes = num_classes;
  return replace_head(ckpt, target, seed);
}

template Checkpoint make_checkpoint(const Network<float>&, std::int64_t, const TensorSet<float>*,
                                    std::vector<std::pair<std::string, double>>);
template Checkpoint make_checkpoint(const Network<double>&, std::int64_t, const TensorSet<double>*,
                                    std::vector<std::pair<std::string, double>>);
template void load_into(const Checkpoint&, Network<float>&);
template void load_into(const Checkpoint&, Network<double>&);

}  // namespace skl
