#include "skl/model/config.hpp"

#include "skl/error.hpp"

namespace skl {

namespace {

int conv_out(int in, int kernel, int stride) { return (in + 2 * (kernel / 2) - kernel) / stride + 1; }

void add_conv(std::vector<ParamInfo>& out, const std::string& name, int cin, int cout, int k) {
  out.push_back({name + ".weight", {cout, cin, k, k}, ParamKind::conv_weight, cout, cin * k * k});
}

void add_bn(std::vector<ParamInfo>& out, const std::string& name, int c) {
  out.push_back({name + ".gamma", {c}, ParamKind::bn_gamma, c, 1});
  out.push_back({name + ".beta", {c}, ParamKind::bn_beta, c, 1});
  out.push_back({name + ".running_mean", {c}, ParamKind::bn_running_mean, c, 1});
  out.push_back({name + ".running_var", {c}, ParamKind::bn_running_var, c, 1});
}

const char* block_name(BlockType t) { return t == BlockType::basic ? "basic" : "bottleneck"; }

}  // namespace

NetworkConfig NetworkConfig::resnet_tiny(int num_classes, int height, int width, int channels) {
  NetworkConfig cfg;
  cfg.input_height = height;
  cfg.input_width = width;
  cfg.input_channels = channels;
  cfg.num_classes = num_classes;
  cfg.stem = {3, 1, 16, 1, false};
  cfg.stages = {{BlockType::basic, 2, 16, 1}, {BlockType::basic, 2, 32, 2}, {BlockType::basic, 2, 64, 2}};
  return cfg;
}

NetworkConfig NetworkConfig::resnet152_shape(int num_classes) {
  NetworkConfig cfg;
  cfg.input_height = 224;
  cfg.input_width = 224;
  cfg.input_channels = 3;
  cfg.num_classes = num_classes;
  cfg.stem = {7, 2, 64, 1, true};
  cfg.stages = {{BlockType::bottleneck, 3, 256, 1},
                {BlockType::bottleneck, 8, 512, 2},
                {BlockType::bottleneck, 36, 1024, 2},
                {BlockType::bottleneck, 3, 2048, 2}};
  return cfg;
}

NetworkConfig NetworkConfig::preset(std::string_view name, int num_classes, int height, int width, int channels) {
  if (name == "resnet-tiny") return resnet_tiny(num_classes, height, width, channels);
  if (name == "resnet-152-shape") return resnet152_shape(num_classes);
  fail(Errc::invalid_argument, "unknown network preset: " + std::string(name));
}

std::vector<std::pair<int, int>> NetworkConfig::spatial_dims() const {
  std::vector<std::pair<int, int>> dims;
  int h = conv_out(input_height, stem.kernel, stem.stride);
  int w = conv_out(input_width, stem.kernel, stem.stride);
  if (stem.max_pool) {
    h = conv_out(h, 3, 2);
    w = conv_out(w, 3, 2);
  }
  dims.emplace_back(h, w);
  for (const auto& s : stages) {
    // Stride lives on the 3x3 conv of the first block; later blocks keep size.
    h = conv_out(h, 3, s.stride);
    w = conv_out(w, 3, s.stride);
    dims.emplace_back(h, w);
  }
  return dims;
}

void NetworkConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(Errc::invalid_argument, "network config: " + what);
  };
  require(input_height >= 1 && input_width >= 1, "input dims must be positive");
  require(input_channels == 1 || input_channels == 3, "input channels must be 1 or 3");
  require(stem.kernel >= 1 && stem.kernel % 2 == 1, "stem kernel must be odd");
  require(stem.stride >= 1 && stem.width >= 1 && stem.depth >= 1, "stem stride/width/depth must be positive");
  require(num_classes >= 1, "num-classes must be positive");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    require(s.blocks >= 1 && s.width >= 1 && s.stride >= 1, "stage " + std::to_string(i + 1) + " fields must be positive");
    if (s.type == BlockType::bottleneck)
      require(s.width % 4 == 0, "bottleneck stage width must be divisible by 4");
  }
  for (const auto& [h, w] : spatial_dims()) require(h >= 1 && w >= 1, "spatial dims collapse below 1x1");
}

int NetworkConfig::final_width() const { return stages.empty() ? stem.width : stages.back().width; }

std::string NetworkConfig::canonical() const {
  std::string s = "in=" + std::to_string(input_height) + "x" + std::to_string(input_width) + "x" +
                  std::to_string(input_channels);
  s += ";stem=" + std::to_string(stem.kernel) + "/" + std::to_string(stem.stride) + "/" + std::to_string(stem.width) +
       "/" + std::to_string(stem.depth) + (stem.max_pool ? "/pool" : "");
  for (const auto& st : stages)
    s += ";stage=" + std::string(block_name(st.type)) + "/" + std::to_string(st.blocks) + "/" +
         std::to_string(st.width) + "/" + std::to_string(st.stride);
  s += ";classes=" + std::to_string(num_classes);
  return s;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t NetworkConfig::digest() const { return fnv1a64(canonical()); }

bool operator==(const NetworkConfig& a, const NetworkConfig& b) { return a.canonical() == b.canonical(); }

nlohmann::json to_json(const NetworkConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : cfg.stages)
    stages.push_back({{"type", block_name(s.type)}, {"blocks", s.blocks}, {"width", s.width}, {"stride", s.stride}});
  return {{"input", {cfg.input_height, cfg.input_width, cfg.input_channels}},
          {"stem",
           {{"kernel", cfg.stem.kernel},
            {"stride", cfg.stem.stride},
            {"width", cfg.stem.width},
            {"depth", cfg.stem.depth},
            {"max_pool", cfg.stem.max_pool}}},
          {"stages", stages},
          {"num_classes", cfg.num_classes}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  try {
    const auto& in = j.at("input");
    cfg.input_height = in.at(0).get<int>();
    cfg.input_width = in.at(1).get<int>();
    cfg.input_channels = in.at(2).get<int>();
    const auto& st = j.at("stem");
    cfg.stem.kernel = st.at("kernel").get<int>();
    cfg.stem.stride = st.at("stride").get<int>();
    cfg.stem.width = st.at("width").get<int>();
    cfg.stem.depth = st.value("depth", 1);
    cfg.stem.max_pool = st.value("max_pool", false);
    for (const auto& s : j.at("stages")) {
      StageSpec spec;
      const auto type = s.at("type").get<std::string>();
      if (type == "basic")
        spec.type = BlockType::basic;
      else if (type == "bottleneck")
        spec.type = BlockType::bottleneck;
      else
        fail(Errc::invalid_argument, "unknown block type: " + type);
      spec.blocks = s.at("blocks").get<int>();
      spec.width = s.at("width").get<int>();
      spec.stride = s.at("stride").get<int>();
      cfg.stages.push_back(spec);
    }
    cfg.num_classes = j.at("num_classes").get<int>();
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::corrupt_stream, std::string("malformed network config: ") + ex.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<ParamInfo> enumerate_parameters(const NetworkConfig& cfg) {
  std::vector<ParamInfo> out;
  int in = cfg.input_channels;
  for (int d = 1; d <= cfg.stem.depth; ++d) {
    const std::string idx = std::to_string(d);
    add_conv(out, "stem.conv" + idx, in, cfg.stem.width, d == 1 ? cfg.stem.kernel : 3);
    add_bn(out, "stem.bn" + idx, cfg.stem.width);
    in = cfg.stem.width;
  }
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const auto& st = cfg.stages[s];
    for (int b = 0; b < st.blocks; ++b) {
      const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      const int stride = b == 0 ? st.stride : 1;
      if (st.type == BlockType::basic) {
        add_conv(out, prefix + ".conv1", in, st.width, 3);
        add_bn(out, prefix + ".bn1", st.width);
        add_conv(out, prefix + ".conv2", st.width, st.width, 3);
        add_bn(out, prefix + ".bn2", st.width);
      } else {
        const int mid = st.width / 4;
        add_conv(out, prefix + ".conv1", in, mid, 1);
        add_bn(out, prefix + ".bn1", mid);
        add_conv(out, prefix + ".conv2", mid, mid, 3);
        add_bn(out, prefix + ".bn2", mid);
        add_conv(out, prefix + ".conv3", mid, st.width, 1);
        add_bn(out, prefix + ".bn3", st.width);
      }
      if (stride != 1 || in != st.width) {
        add_conv(out, prefix + ".proj.conv", in, st.width, 1);
        add_bn(out, prefix + ".proj.bn", st.width);
      }
      in = st.width;
    }
  }
  out.push_back({"head.fc.weight", {cfg.num_classes, in}, ParamKind::dense_weight, cfg.num_classes, in});
  out.push_back({"head.fc.bias", {cfg.num_classes}, ParamKind::dense_bias, cfg.num_classes, 1});
  return out;
}

}  // namespace skl
