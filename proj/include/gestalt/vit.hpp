#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gestalt/image.hpp"
#include "gestalt/tensor_archive.hpp"

namespace gestalt {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;

enum class Activation { gelu, quick_gelu };

// Encoder hyper-parameters. Defaults describe ViT-B/16 at 224 px; smaller
// shapes are accepted so that hand-built toy encoders share the engine.
struct ViTConfig {
  int image_size = 224;
  int patch_size = 16;
  int n_layers = 12;
  int n_heads = 12;
  int width = 768;
  int mlp_ratio = 4;
  bool uses_cls_token = true;
  // Extra LayerNorm between the embeddings and the first block (CLIP towers).
  bool pre_norm_embeddings = false;
  double layer_norm_eps = 1e-6;
  Activation activation = Activation::gelu;
  std::array<float, 3> pixel_mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> pixel_std = {0.229f, 0.224f, 0.225f};

  int grid() const { return image_size / patch_size; }
  int n_patches() const { return grid() * grid(); }
  int n_tokens() const { return n_patches() + (uses_cls_token ? 1 : 0); }
  int head_dim() const { return width / n_heads; }
  int mlp_dim() const { return width * mlp_ratio; }
  int token_of_patch(int patch) const { return patch + (uses_cls_token ? 1 : 0); }

  void validate() const;
  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

// Human-readable `key = value` config files; `#` starts a comment.
ViTConfig parse_vit_config(std::string_view text);
std::string format_vit_config(const ViTConfig& config);
ViTConfig load_vit_config(const std::filesystem::path& path);
void save_vit_config(const std::filesystem::path& path, const ViTConfig& config);

struct HeadId {
  int layer = 0;
  int head = 0;
  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::int64_t> shape;
};

// Archive contract. Linear weights are stored (out, in); the patch embedding
// is a (width, 3, patch, patch) convolution kernel.
//
//   patch_embed.weight, patch_embed.bias, cls_token (if used), pos_embed,
//   norm_pre.{weight,bias} (if pre_norm_embeddings),
//   blocks.{i}.norm1.{weight,bias},
//   blocks.{i}.attn.{q,k,v,proj}.{weight,bias},
//   blocks.{i}.norm2.{weight,bias},
//   blocks.{i}.mlp.fc1.{weight,bias}, blocks.{i}.mlp.fc2.{weight,bias},
//   norm.{weight,bias}
std::vector<TensorSpec> tensor_layout(const ViTConfig& config);

// Post-softmax attention for every (layer, head); rows are queries.
class AttentionRecord {
 public:
  AttentionRecord() = default;
  AttentionRecord(int layers, int heads, int tokens);

  int layers() const { return layers_; }
  int heads() const { return heads_; }
  int tokens() const { return tokens_; }
  bool empty() const { return maps_.empty(); }

  const MatrixF& map(int layer, int head) const { return maps_[slot(layer, head)]; }
  MatrixF& map(int layer, int head) { return maps_[slot(layer, head)]; }
  float weight(int layer, int head, int query, int key) const { return map(layer, head)(query, key); }

 private:
  std::size_t slot(int layer, int head) const;

  int layers_ = 0;
  int heads_ = 0;
  int tokens_ = 0;
  std::vector<MatrixF> maps_;
};

class HeadMeanStore;

struct HeadAblationSpec {
  std::vector<HeadId> heads;
  const HeadMeanStore* means = nullptr;
};

struct CaptureOptions {
  bool attention = false;
  bool activations = false;
  // Per-layer concatenated head outputs, before the output projection.
  bool head_outputs = false;
};

struct ForwardOptions {
  CaptureOptions capture;
  const HeadAblationSpec* ablation = nullptr;
  // Stop after this block; -1 runs the whole encoder.
  int last_layer = -1;
};

struct ForwardResult {
  std::vector<MatrixF> activations;   // residual stream after each block, tokens x width
  AttentionRecord attention;
  std::vector<MatrixF> head_outputs;  // tokens x width per layer
};

enum class ReadoutMode { residual, post_norm };
ReadoutMode parse_readout_mode(std::string_view text);
std::string_view to_string(ReadoutMode mode);

class ViTModel {
 public:
  // Validates names and shapes against tensor_layout(config).
  static ViTModel from_archive(const TensorArchive& archive, const ViTConfig& config);
  static ViTModel load(const std::filesystem::path& archive_path, const ViTConfig& config);
  // Truncated normal (std 0.02, cut at two standard deviations) for every
  // weight, embedding and token; zero biases; unit LayerNorm gains.
  static ViTModel init_untrained(std::uint64_t seed, const ViTConfig& config);

  TensorArchive to_archive() const;
  const ViTConfig& config() const { return config_; }

  ForwardResult forward(const Image& image, const ForwardOptions& options = {}) const;

  // Patch-token rows of a captured block output, optionally passed through
  // the final LayerNorm.
  MatrixF patch_readout(const ForwardResult& result, int layer, ReadoutMode mode) const;

 private:
  struct Block {
    VectorF norm1_w, norm1_b;
    MatrixF qkv_w;  // (3 * width) x width
    VectorF qkv_b;
    MatrixF proj_w;
    VectorF proj_b;
    VectorF norm2_w, norm2_b;
    MatrixF fc1_w;
    VectorF fc1_b;
    MatrixF fc2_w;
    VectorF fc2_b;
  };

  ViTModel() = default;
  MatrixF embed(const Image& image) const;

  ViTConfig config_;
  MatrixF patch_w_;  // width x (3 * patch * patch), (channel, row, col) order
  VectorF patch_b_;
  VectorF cls_;
  MatrixF pos_;
  VectorF norm_pre_w_, norm_pre_b_;
  std::vector<Block> blocks_;
  VectorF norm_w_, norm_b_;
  std::map<std::string, std::string> metadata_;
};

enum class MeanMode { positional, global };
MeanMode parse_mean_mode(std::string_view text);
std::string_view to_string(MeanMode mode);

// Running per-(layer, head) means of head outputs. Positional mode keeps one
// mean vector per token position; global mode averages over positions too.
class HeadMeanStore {
 public:
  HeadMeanStore(const ViTConfig& config, MeanMode mode);

  // `result` must carry head outputs for every layer.
  void accumulate(const ForwardResult& result);
  void merge(const HeadMeanStore& other);

  std::size_t count() const { return count_; }
  MeanMode mode() const { return mode_; }
  const ViTConfig& config() const { return config_; }
  const std::string& fingerprint() const { return fingerprint_; }
  void set_fingerprint(std::string fp) { fingerprint_ = std::move(fp); }

  // tokens x head_dim in positional mode, 1 x head_dim in global mode.
  MatrixF mean(HeadId head) const;

  TensorArchive to_archive() const;
  static HeadMeanStore from_archive(const TensorArchive& archive, const ViTConfig& config);

 private:
  ViTConfig config_;
  MeanMode mode_;
  std::size_t count_ = 0;
  std::string fingerprint_;
  std::vector<Eigen::MatrixXd> sums_;  // per layer, tokens x width
};

HeadMeanStore compute_head_means(const ViTModel& model, std::span<const Image> images, MeanMode mode,
                                 const std::string& fingerprint, int jobs = 1);

}  // namespace gestalt
