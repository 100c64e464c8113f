#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gestalt/error.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double out = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + std::string(v) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true or false, got '" + std::string(v) + "'");
}

std::array<float, 3> parse_triple(std::string_view key, std::string_view v) {
  std::vector<std::string_view> items;
  for (std::size_t start = 0;;) {
    const auto comma = v.find(',', start);
    items.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (items.size() != 3)
    throw ConfigError("config key '" + std::string(key) + "': expected three comma-separated numbers");
  return {static_cast<float>(parse_double(key, items[0])), static_cast<float>(parse_double(key, items[1])),
          static_cast<float>(parse_double(key, items[2]))};
}

std::string format_float(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

void ViTConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (image_size <= 0 || patch_size <= 0) fail("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) fail("patch_size must divide image_size");
  if (n_layers <= 0) fail("n_layers must be positive");
  if (n_heads <= 0 || width <= 0) fail("n_heads and width must be positive");
  if (width % n_heads != 0) fail("width must be divisible by n_heads");
  if (mlp_ratio <= 0) fail("mlp_ratio must be positive");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
  for (float s : pixel_std)
    if (!(s > 0.0f)) fail("pixel_std entries must be positive");
}

ViTConfig parse_vit_config(std::string_view text) {
  ViTConfig cfg;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.emplace(key).second) throw ConfigError("config key '" + std::string(key) + "' given twice");

    if (key == "image_size") cfg.image_size = parse_int(key, value);
    else if (key == "patch_size") cfg.patch_size = parse_int(key, value);
    else if (key == "n_layers") cfg.n_layers = parse_int(key, value);
    else if (key == "n_heads") cfg.n_heads = parse_int(key, value);
    else if (key == "width") cfg.width = parse_int(key, value);
    else if (key == "mlp_ratio") cfg.mlp_ratio = parse_int(key, value);
    else if (key == "uses_cls_token") cfg.uses_cls_token = parse_bool(key, value);
    else if (key == "pre_norm_embeddings") cfg.pre_norm_embeddings = parse_bool(key, value);
    else if (key == "layer_norm_eps") cfg.layer_norm_eps = parse_double(key, value);
    else if (key == "activation") {
      if (value == "gelu") cfg.activation = Activation::gelu;
      else if (value == "quick_gelu") cfg.activation = Activation::quick_gelu;
      else throw ConfigError("config key 'activation': unknown value '" + std::string(value) + "'");
    } else if (key == "pixel_mean") cfg.pixel_mean = parse_triple(key, value);
    else if (key == "pixel_std") cfg.pixel_std = parse_triple(key, value);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
  cfg.validate();
  return cfg;
}

std::string format_vit_config(const ViTConfig& c) {
  std::ostringstream os;
  auto triple = [](const std::array<float, 3>& t) {
    return format_float(t[0]) + ", " + format_float(t[1]) + ", " + format_float(t[2]);
  };
  os << "image_size = " << c.image_size << '\n'
     << "patch_size = " << c.patch_size << '\n'
     << "n_layers = " << c.n_layers << '\n'
     << "n_heads = " << c.n_heads << '\n'
     << "width = " << c.width << '\n'
     << "mlp_ratio = " << c.mlp_ratio << '\n'
     << "uses_cls_token = " << (c.uses_cls_token ? "true" : "false") << '\n'
     << "pre_norm_embeddings = " << (c.pre_norm_embeddings ? "true" : "false") << '\n'
     << "layer_norm_eps = " << format_float(c.layer_norm_eps) << '\n'
     << "activation = " << (c.activation == Activation::gelu ? "gelu" : "quick_gelu") << '\n'
     << "pixel_mean = " << triple(c.pixel_mean) << '\n'
     << "pixel_std = " << triple(c.pixel_std) << '\n';
  return os.str();
}

ViTConfig load_vit_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_vit_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_vit_config(const std::filesystem::path& path, const ViTConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model config " + path.string());
  out << format_vit_config(config);
  if (!out) throw DataError("failed writing model config " + path.string());
}

std::vector<TensorSpec> tensor_layout(const ViTConfig& c) {
  c.validate();
  const std::int64_t w = c.width;
  const std::int64_t p = c.patch_size;
  const std::int64_t m = c.mlp_dim();
  std::vector<TensorSpec> out;
  out.push_back({"patch_embed.weight", {w, 3, p, p}});
  out.push_back({"patch_embed.bias", {w}});
  if (c.uses_cls_token) out.push_back({"cls_token", {w}});
  out.push_back({"pos_embed", {c.n_tokens(), w}});
  if (c.pre_norm_embeddings) {
    out.push_back({"norm_pre.weight", {w}});
    out.push_back({"norm_pre.bias", {w}});
  }
  for (int i = 0; i < c.n_layers; ++i) {
    const std::string b = "blocks." + std::to_string(i) + ".";
    out.push_back({b + "norm1.weight", {w}});
    out.push_back({b + "norm1.bias", {w}});
    for (const char* name : {"q", "k", "v", "proj"}) {
      out.push_back({b + "attn." + name + ".weight", {w, w}});
      out.push_back({b + "attn." + name + ".bias", {w}});
    }
    out.push_back({b + "norm2.weight", {w}});
    out.push_back({b + "norm2.bias", {w}});
    out.push_back({b + "mlp.fc1.weight", {m, w}});
    out.push_back({b + "mlp.fc1.bias", {m}});
    out.push_back({b + "mlp.fc2.weight", {w, m}});
    out.push_back({b + "mlp.fc2.bias", {w}});
  }
  out.push_back({"norm.weight", {w}});
  out.push_back({"norm.bias", {w}});
  return out;
}

ReadoutMode parse_readout_mode(std::string_view text) {
  if (text == "residual") return ReadoutMode::residual;
  if (text == "post_norm") return ReadoutMode::post_norm;
  throw ConfigError("unknown readout mode '" + std::string(text) + "' (expected residual or post_norm)");
}

std::string_view to_string(ReadoutMode mode) { return mode == ReadoutMode::residual ? "residual" : "post_norm"; }

MeanMode parse_mean_mode(std::string_view text) {
  if (text == "positional") return MeanMode::positional;
  if (text == "global") return MeanMode::global;
  throw ConfigError("unknown mean mode '" + std::string(text) + "' (expected positional or global)");
}

std::string_view to_string(MeanMode mode) { return mode == MeanMode::positional ? "positional" : "global"; }

}  // namespace gestalt
