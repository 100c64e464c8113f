#include <cmath>
#include <set>

#include <unsupported/Eigen/SpecialFunctions>

#include "gestalt/error.hpp"
#include "gestalt/random.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

namespace {

void layer_norm(MatrixF& x, const VectorF& w, const VectorF& b, double eps) {
  const Eigen::Index n = x.cols();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) mean += row(c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) {
      const double d = row(c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const float m = static_cast<float>(mean);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    row = ((row.array() - m) * inv * w.transpose().array() + b.transpose().array()).matrix();
  }
}

// y = x W^T + b for W stored (out, in).
MatrixF linear(const MatrixF& x, const MatrixF& w, const VectorF& b) {
  MatrixF y(x.rows(), w.rows());
  y.noalias() = x * w.transpose();
  y.rowwise() += b.transpose();
  return y;
}

void softmax_rows(MatrixF& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const float m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row /= row.sum();
  }
}

void activate(MatrixF& x, Activation act) {
  if (act == Activation::gelu) {
    constexpr float kInvSqrt2 = 0.70710678118654752f;
    x = (0.5f * x.array() * (1.0f + (x.array() * kInvSqrt2).erf())).matrix();
  } else {
    x = (x.array() / (1.0f + (-1.702f * x.array()).exp())).matrix();
  }
}

VectorF vector_from(const Tensor& t) { return Eigen::Map<const VectorF>(t.values.data(), static_cast<Eigen::Index>(t.numel())); }

MatrixF matrix_from(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const MatrixF>(t.values.data(), rows, cols);
}

Tensor tensor_from(const VectorF& v) {
  return Tensor({v.size()}, std::vector<float>(v.data(), v.data() + v.size()));
}

Tensor tensor_from(const MatrixF& m, std::vector<std::int64_t> shape) {
  return Tensor(std::move(shape), std::vector<float>(m.data(), m.data() + m.size()));
}

float truncated_normal(Rng& rng, double stddev) {
  for (;;) {
    const double v = rng.normal();
    if (std::abs(v) <= 2.0) return static_cast<float>(v * stddev);
  }
}

}  // namespace

AttentionRecord::AttentionRecord(int layers, int heads, int tokens)
    : layers_(layers), heads_(heads), tokens_(tokens), maps_(static_cast<std::size_t>(layers) * heads) {}

std::size_t AttentionRecord::slot(int layer, int head) const {
  if (layer < 0 || layer >= layers_ || head < 0 || head >= heads_)
    throw ConfigError("attention record has no entry for layer " + std::to_string(layer) + " head " +
                      std::to_string(head));
  return static_cast<std::size_t>(layer) * heads_ + head;
}

ViTModel ViTModel::from_archive(const TensorArchive& archive, const ViTConfig& config) {
  const auto layout = tensor_layout(config);
  std::set<std::string> expected;
  for (const auto& spec : layout) {
    expected.insert(spec.name);
    if (!archive.contains(spec.name)) throw DataError("missing tensor '" + spec.name + "'");
    const Tensor& t = archive.at(spec.name);
    if (t.shape != spec.shape)
      throw DataError("shape mismatch for tensor '" + spec.name + "': expected " + shape_string(spec.shape) +
                      ", found " + shape_string(t.shape));
  }
  for (const auto& [name, t] : archive.tensors())
    if (!expected.contains(name)) throw DataError("unexpected tensor '" + name + "'");

  const Eigen::Index w = config.width;
  const Eigen::Index m = config.mlp_dim();
  const Eigen::Index pp = 3 * config.patch_size * config.patch_size;

  ViTModel model;
  model.config_ = config;
  model.metadata_ = archive.metadata();
  model.patch_w_ = matrix_from(archive.at("patch_embed.weight"), w, pp);
  model.patch_b_ = vector_from(archive.at("patch_embed.bias"));
  if (config.uses_cls_token) model.cls_ = vector_from(archive.at("cls_token"));
  model.pos_ = matrix_from(archive.at("pos_embed"), config.n_tokens(), w);
  if (config.pre_norm_embeddings) {
    model.norm_pre_w_ = vector_from(archive.at("norm_pre.weight"));
    model.norm_pre_b_ = vector_from(archive.at("norm_pre.bias"));
  }
  model.blocks_.resize(static_cast<std::size_t>(config.n_layers));
  for (int i = 0; i < config.n_layers; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    Block& b = model.blocks_[static_cast<std::size_t>(i)];
    b.norm1_w = vector_from(archive.at(p + "norm1.weight"));
    b.norm1_b = vector_from(archive.at(p + "norm1.bias"));
    b.qkv_w.resize(3 * w, w);
    b.qkv_b.resize(3 * w);
    int slot = 0;
    for (const char* name : {"q", "k", "v"}) {
      b.qkv_w.middleRows(slot * w, w) = matrix_from(archive.at(p + "attn." + name + ".weight"), w, w);
      b.qkv_b.segment(slot * w, w) = vector_from(archive.at(p + "attn." + name + ".bias"));
      ++slot;
    }
    b.proj_w = matrix_from(archive.at(p + "attn.proj.weight"), w, w);
    b.proj_b = vector_from(archive.at(p + "attn.proj.bias"));
    b.norm2_w = vector_from(archive.at(p + "norm2.weight"));
    b.norm2_b = vector_from(archive.at(p + "norm2.bias"));
    b.fc1_w = matrix_from(archive.at(p + "mlp.fc1.weight"), m, w);
    b.fc1_b = vector_from(archive.at(p + "mlp.fc1.bias"));
    b.fc2_w = matrix_from(archive.at(p + "mlp.fc2.weight"), w, m);
    b.fc2_b = vector_from(archive.at(p + "mlp.fc2.bias"));
  }
  model.norm_w_ = vector_from(archive.at("norm.weight"));
  model.norm_b_ = vector_from(archive.at("norm.bias"));
  return model;
}

ViTModel ViTModel::load(const std::filesystem::path& archive_path, const ViTConfig& config) {
  return from_archive(TensorArchive::load(archive_path), config);
}

ViTModel ViTModel::init_untrained(std::uint64_t seed, const ViTConfig& config) {
  TensorArchive archive;
  Rng rng(seed);
  for (const auto& spec : tensor_layout(config)) {
    Tensor t = Tensor::zeros(spec.shape);
    const std::string& n = spec.name;
    const bool is_norm = n.find("norm") != std::string::npos;
    const bool is_bias = n.ends_with(".bias");
    if (is_norm && n.ends_with(".weight")) {
      std::fill(t.values.begin(), t.values.end(), 1.0f);
    } else if (!is_bias) {
      for (float& v : t.values) v = truncated_normal(rng, 0.02);
    }
    archive.insert(n, std::move(t));
  }
  archive.metadata()["init"] = "truncated_normal_0.02";
  archive.metadata()["seed"] = std::to_string(seed);
  return from_archive(archive, config);
}

TensorArchive ViTModel::to_archive() const {
  const std::int64_t w = config_.width;
  const std::int64_t m = config_.mlp_dim();
  const std::int64_t p = config_.patch_size;
  TensorArchive a;
  a.metadata() = metadata_;
  a.insert("patch_embed.weight", tensor_from(patch_w_, {w, 3, p, p}));
  a.insert("patch_embed.bias", tensor_from(patch_b_));
  if (config_.uses_cls_token) a.insert("cls_token", tensor_from(cls_));
  a.insert("pos_embed", tensor_from(pos_, {config_.n_tokens(), w}));
  if (config_.pre_norm_embeddings) {
    a.insert("norm_pre.weight", tensor_from(norm_pre_w_));
    a.insert("norm_pre.bias", tensor_from(norm_pre_b_));
  }
  for (int i = 0; i < config_.n_layers; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    const Block& b = blocks_[static_cast<std::size_t>(i)];
    a.insert(pre + "norm1.weight", tensor_from(b.norm1_w));
    a.insert(pre + "norm1.bias", tensor_from(b.norm1_b));
    int slot = 0;
    for (const char* name : {"q", "k", "v"}) {
      const MatrixF part = b.qkv_w.middleRows(slot * w, w);
      const VectorF bias = b.qkv_b.segment(slot * w, w);
      a.insert(pre + "attn." + name + ".weight", tensor_from(part, {w, w}));
      a.insert(pre + "attn." + name + ".bias", tensor_from(bias));
      ++slot;
    }
    a.insert(pre + "attn.proj.weight", tensor_from(b.proj_w, {w, w}));
    a.insert(pre + "attn.proj.bias", tensor_from(b.proj_b));
    a.insert(pre + "norm2.weight", tensor_from(b.norm2_w));
    a.insert(pre + "norm2.bias", tensor_from(b.norm2_b));
    a.insert(pre + "mlp.fc1.weight", tensor_from(b.fc1_w, {m, w}));
    a.insert(pre + "mlp.fc1.bias", tensor_from(b.fc1_b));
    a.insert(pre + "mlp.fc2.weight", tensor_from(b.fc2_w, {w, m}));
    a.insert(pre + "mlp.fc2.bias", tensor_from(b.fc2_b));
  }
  a.insert("norm.weight", tensor_from(norm_w_));
  a.insert("norm.bias", tensor_from(norm_b_));
  return a;
}

MatrixF ViTModel::embed(const Image& image) const {
  const int size = config_.image_size;
  if (image.width() != size || image.height() != size)
    throw DataError("model expects a " + std::to_string(size) + "x" + std::to_string(size) + " image, got " +
                    std::to_string(image.width()) + "x" + std::to_string(image.height()));
  const int p = config_.patch_size;
  const int g = config_.grid();
  const int pp = p * p;
  std::array<float, 3> scale{}, shift{};
  for (int c = 0; c < 3; ++c) {
    scale[c] = 1.0f / (255.0f * config_.pixel_std[c]);
    shift[c] = config_.pixel_mean[c] / config_.pixel_std[c];
  }
  MatrixF patches(config_.n_patches(), 3 * pp);
  const auto& bytes = image.bytes();
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      auto row = patches.row(gy * g + gx);
      for (int ky = 0; ky < p; ++ky) {
        for (int kx = 0; kx < p; ++kx) {
          const std::size_t src = (static_cast<std::size_t>(gy * p + ky) * size + (gx * p + kx)) * 3;
          for (int c = 0; c < 3; ++c) row(c * pp + ky * p + kx) = bytes[src + c] * scale[c] - shift[c];
        }
      }
    }
  }
  MatrixF x(config_.n_tokens(), config_.width);
  if (config_.uses_cls_token) x.row(0) = cls_.transpose();
  x.bottomRows(config_.n_patches()) = linear(patches, patch_w_, patch_b_);
  x += pos_;
  if (config_.pre_norm_embeddings) layer_norm(x, norm_pre_w_, norm_pre_b_, config_.layer_norm_eps);
  return x;
}

ForwardResult ViTModel::forward(const Image& image, const ForwardOptions& options) const {
  const int layers = config_.n_layers;
  const int last = options.last_layer < 0 ? layers - 1 : options.last_layer;
  if (last >= layers) throw ConfigError("last_layer " + std::to_string(last) + " exceeds the model depth");

  const int tokens = config_.n_tokens();
  const int heads = config_.n_heads;
  const int dh = config_.head_dim();
  const Eigen::Index w = config_.width;

  // Per layer, the heads to replace.
  std::vector<std::vector<int>> ablated(static_cast<std::size_t>(layers));
  if (options.ablation) {
    const HeadAblationSpec& spec = *options.ablation;
    if (!spec.heads.empty() && spec.means == nullptr)
      throw ConfigError("head ablation requested without a HeadMeanStore");
    for (const HeadId& h : spec.heads) {
      if (h.layer < 0 || h.layer >= layers || h.head < 0 || h.head >= heads)
        throw ConfigError("ablation head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                          ") is out of range");
      ablated[static_cast<std::size_t>(h.layer)].push_back(h.head);
    }
    if (spec.means && !spec.heads.empty()) {
      const ViTConfig& mc = spec.means->config();
      if (mc.n_tokens() != tokens || mc.width != config_.width || mc.n_heads != heads || mc.n_layers != layers)
        throw ConfigError("HeadMeanStore shape does not match the model");
    }
  }

  ForwardResult result;
  if (options.capture.attention) result.attention = AttentionRecord(last + 1, heads, tokens);

  MatrixF x = embed(image);
  MatrixF h(tokens, w);
  MatrixF o(tokens, w);
  MatrixF scores(tokens, tokens);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  for (int l = 0; l <= last; ++l) {
    const Block& b = blocks_[static_cast<std::size_t>(l)];
    h = x;
    layer_norm(h, b.norm1_w, b.norm1_b, config_.layer_norm_eps);
    const MatrixF qkv = linear(h, b.qkv_w, b.qkv_b);
    for (int hd = 0; hd < heads; ++hd) {
      const auto q = qkv.middleCols(hd * dh, dh);
      const auto k = qkv.middleCols(w + hd * dh, dh);
      const auto v = qkv.middleCols(2 * w + hd * dh, dh);
      scores.noalias() = q * k.transpose();
      scores *= scale;
      softmax_rows(scores);
      o.middleCols(hd * dh, dh).noalias() = scores * v;
      if (options.capture.attention) result.attention.map(l, hd) = scores;
    }
    for (int hd : ablated[static_cast<std::size_t>(l)]) {
      const MatrixF mean = options.ablation->means->mean({l, hd});
      if (mean.rows() == 1)
        o.middleCols(hd * dh, dh).rowwise() = mean.row(0);
      else
        o.middleCols(hd * dh, dh) = mean;
    }
    if (options.capture.head_outputs) result.head_outputs.push_back(o);
    x += linear(o, b.proj_w, b.proj_b);

    h = x;
    layer_norm(h, b.norm2_w, b.norm2_b, config_.layer_norm_eps);
    MatrixF mid = linear(h, b.fc1_w, b.fc1_b);
    activate(mid, config_.activation);
    x += linear(mid, b.fc2_w, b.fc2_b);
    if (options.capture.activations) result.activations.push_back(x);
  }
  return result;
}

MatrixF ViTModel::patch_readout(const ForwardResult& result, int layer, ReadoutMode mode) const {
  if (layer < 0 || static_cast<std::size_t>(layer) >= result.activations.size())
    throw ConfigError("no captured activations for layer " + std::to_string(layer));
  MatrixF out = result.activations[static_cast<std::size_t>(layer)].bottomRows(config_.n_patches());
  if (mode == ReadoutMode::post_norm) layer_norm(out, norm_w_, norm_b_, config_.layer_norm_eps);
  return out;
}

}  // namespace gestalt
