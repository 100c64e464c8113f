#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gestalt/tensor_archive.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

enum class NameTransform {
  copy,     // reshape to the target shape, element order kept
  split_q,  // rows [0, w) of a fused (3w, ...) qkv tensor
  split_k,  // rows [w, 2w)
  split_v,  // rows [2w, 3w)
  zeros     // no source tensor; the target is zero-filled
};
std::string_view to_string(NameTransform t);

struct NameMapEntry {
  std::string source;  // empty for zeros
  std::string target;
  NameTransform transform = NameTransform::copy;
  // Per-output-row scale folded in after the transform (layer-scale gammas).
  std::string row_scale;
};

// Ordered mapping from checkpoint tensor names onto the engine archive
// contract of tensor_layout().
struct NameMap {
  std::string family;
  std::vector<NameMapEntry> entries;
};

// timm-style encoders (DINO, DINOv2, MAE, supervised ViT): fused qkv, cls and
// pos tensors with a leading batch axis. `layer_scale` folds ls1/ls2 gammas
// into attn.proj and mlp.fc2.
NameMap timm_vit_name_map(const ViTConfig& config, bool layer_scale = false);
// Hugging Face CLIP vision tower: separate q/k/v, bias-free patch embedding,
// pre-LayerNorm on the embeddings.
NameMap hf_clip_vision_name_map(const ViTConfig& config);

// Throws ConfigError listing every engine tensor without a source and every
// duplicated or unknown target.
void validate_name_map(const NameMap& map, const ViTConfig& config);

// Builds an engine archive from a checkpoint archive. Missing source tensors
// and element-count mismatches throw DataError naming the tensor; source
// tensors that the map does not mention are ignored.
TensorArchive apply_name_map(const TensorArchive& source, const NameMap& map, const ViTConfig& config);

}  // namespace gestalt
