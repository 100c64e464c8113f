#include <map>
#include <set>

#include "gestalt/error.hpp"
#include "gestalt/name_map.hpp"

namespace gestalt {

std::string_view to_string(NameTransform t) {
  switch (t) {
    case NameTransform::copy: return "copy";
    case NameTransform::split_q: return "split_q";
    case NameTransform::split_k: return "split_k";
    case NameTransform::split_v: return "split_v";
    case NameTransform::zeros: return "zeros";
  }
  return "?";
}

NameMap timm_vit_name_map(const ViTConfig& config, bool layer_scale) {
  config.validate();
  NameMap map{layer_scale ? "timm_vit_layer_scale" : "timm_vit", {}};
  auto add = [&map](std::string src, std::string dst, NameTransform t = NameTransform::copy, std::string scale = {}) {
    map.entries.push_back({std::move(src), std::move(dst), t, std::move(scale)});
  };
  add("patch_embed.proj.weight", "patch_embed.weight");
  add("patch_embed.proj.bias", "patch_embed.bias");
  if (config.uses_cls_token) add("cls_token", "cls_token");
  add("pos_embed", "pos_embed");
  if (config.pre_norm_embeddings) {
    add("norm_pre.weight", "norm_pre.weight");
    add("norm_pre.bias", "norm_pre.bias");
  }
  for (int i = 0; i < config.n_layers; ++i) {
    const std::string b = "blocks." + std::to_string(i) + ".";
    for (const char* p : {"weight", "bias"}) add(b + "norm1." + p, b + "norm1." + p);
    for (const char* p : {"weight", "bias"}) {
      const std::string src = b + "attn.qkv." + p;
      add(src, b + "attn.q." + p, NameTransform::split_q);
      add(src, b + "attn.k." + p, NameTransform::split_k);
      add(src, b + "attn.v." + p, NameTransform::split_v);
    }
    const std::string ls1 = layer_scale ? b + "ls1.gamma" : "";
    const std::string ls2 = layer_scale ? b + "ls2.gamma" : "";
    for (const char* p : {"weight", "bias"}) add(b + "attn.proj." + p, b + "attn.proj." + p, NameTransform::copy, ls1);
    for (const char* p : {"weight", "bias"}) add(b + "norm2." + p, b + "norm2." + p);
    for (const char* p : {"weight", "bias"}) add(b + "mlp.fc1." + p, b + "mlp.fc1." + p);
    for (const char* p : {"weight", "bias"}) add(b + "mlp.fc2." + p, b + "mlp.fc2." + p, NameTransform::copy, ls2);
  }
  add("norm.weight", "norm.weight");
  add("norm.bias", "norm.bias");
  return map;
}

NameMap hf_clip_vision_name_map(const ViTConfig& config) {
  config.validate();
  const std::string root = "vision_model.";
  NameMap map{"hf_clip_vision", {}};
  auto add = [&map](std::string src, std::string dst, NameTransform t = NameTransform::copy, std::string scale = {}) {
    map.entries.push_back({std::move(src), std::move(dst), t, std::move(scale)});
  };
  add(root + "embeddings.patch_embedding.weight", "patch_embed.weight");
  add("", "patch_embed.bias", NameTransform::zeros);
  if (config.uses_cls_token) add(root + "embeddings.class_embedding", "cls_token");
  add(root + "embeddings.position_embedding.weight", "pos_embed");
  if (config.pre_norm_embeddings) {
    add(root + "pre_layrnorm.weight", "norm_pre.weight");
    add(root + "pre_layrnorm.bias", "norm_pre.bias");
  }
  for (int i = 0; i < config.n_layers; ++i) {
    const std::string s = root + "encoder.layers." + std::to_string(i) + ".";
    const std::string b = "blocks." + std::to_string(i) + ".";
    for (const char* p : {"weight", "bias"}) {
      add(s + "layer_norm1." + p, b + "norm1." + p);
      add(s + "self_attn.q_proj." + p, b + "attn.q." + p);
      add(s + "self_attn.k_proj." + p, b + "attn.k." + p);
      add(s + "self_attn.v_proj." + p, b + "attn.v." + p);
      add(s + "self_attn.out_proj." + p, b + "attn.proj." + p);
      add(s + "layer_norm2." + p, b + "norm2." + p);
      add(s + "mlp.fc1." + p, b + "mlp.fc1." + p);
      add(s + "mlp.fc2." + p, b + "mlp.fc2." + p);
    }
  }
  add(root + "post_layernorm.weight", "norm.weight");
  add(root + "post_layernorm.bias", "norm.bias");
  return map;
}

void validate_name_map(const NameMap& map, const ViTConfig& config) {
  std::set<std::string> required;
  for (const auto& spec : tensor_layout(config)) required.insert(spec.name);
  std::map<std::string, int> seen;
  std::string problems;
  for (const auto& entry : map.entries) {
    if (!required.contains(entry.target)) problems += "\n  unknown target " + entry.target;
    if (++seen[entry.target] == 2) problems += "\n  duplicate target " + entry.target;
    if (entry.transform != NameTransform::zeros && entry.source.empty())
      problems += "\n  no source for " + entry.target;
  }
  for (const auto& name : required)
    if (!seen.contains(name)) problems += "\n  missing " + name;
  if (!problems.empty()) throw ConfigError("name map '" + map.family + "' is not total:" + problems);
}

TensorArchive apply_name_map(const TensorArchive& source, const NameMap& map, const ViTConfig& config) {
  validate_name_map(map, config);
  std::map<std::string, std::vector<std::int64_t>> shapes;
  for (auto& spec : tensor_layout(config)) shapes[spec.name] = std::move(spec.shape);

  TensorArchive out;
  for (const auto& entry : map.entries) {
    const auto& shape = shapes.at(entry.target);
    const std::size_t n = element_count(shape);
    if (entry.transform == NameTransform::zeros) {
      out.insert(entry.target, Tensor::zeros(shape));
      continue;
    }
    if (!source.contains(entry.source))
      throw DataError("checkpoint is missing '" + entry.source + "' (for " + entry.target + ")");
    const Tensor& src = source.at(entry.source);
    std::vector<float> values;
    if (entry.transform == NameTransform::copy) {
      if (src.numel() != n)
        throw DataError("'" + entry.source + "' has shape " + shape_string(src.shape) + ", expected " +
                        std::to_string(n) + " elements for " + entry.target + " " + shape_string(shape));
      values = src.values;
    } else {
      if (src.numel() != 3 * n)
        throw DataError("fused '" + entry.source + "' has shape " + shape_string(src.shape) +
                        ", expected 3 x " + shape_string(shape));
      const std::size_t part = entry.transform == NameTransform::split_q ? 0
                               : entry.transform == NameTransform::split_k ? 1
                                                                          : 2;
      values.assign(src.values.begin() + static_cast<std::ptrdiff_t>(part * n),
                    src.values.begin() + static_cast<std::ptrdiff_t>((part + 1) * n));
    }
    if (!entry.row_scale.empty()) {
      if (!source.contains(entry.row_scale))
        throw DataError("checkpoint is missing '" + entry.row_scale + "' (for " + entry.target + ")");
      const Tensor& g = source.at(entry.row_scale);
      const auto rows = static_cast<std::size_t>(shape.front());
      if (g.numel() != rows)
        throw DataError("'" + entry.row_scale + "' has " + std::to_string(g.numel()) + " elements, expected " +
                        std::to_string(rows));
      const std::size_t stride = n / rows;
      for (std::size_t i = 0; i < n; ++i) values[i] *= g.values[i / stride];
    }
    out.insert(entry.target, Tensor(shape, std::move(values)));
  }
  out.metadata()["name_map"] = map.family;
  return out;
}

}  // namespace gestalt
