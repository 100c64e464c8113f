#include "toy_models.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <map>

namespace gestalt::testing {

namespace {

Tensor make(std::vector<std::int64_t> shape, std::vector<float> values) {
  return Tensor(std::move(shape), std::move(values));
}

// Residual layout of the edge detector.
constexpr int kWidth = 1024;
constexpr int kHeads = 2;
constexpr int kHeadDim = kWidth / kHeads;
constexpr int kGrid = 14;
constexpr int kPatches = kGrid * kGrid;
constexpr int kPatch = 16;
constexpr int kSteps = 8;  // every other of the 15 steps along a side
constexpr int kSideDims = kSteps * 3;
constexpr int kCodeDims = 16;
constexpr int kGate = 50;  // gate offset in units of the profile scale

constexpr int kF0 = 0;                        // 4 sides x 8 steps x 3 channels
constexpr int kFC = kF0 + 4 * kSideDims;      // minus the sum of the profiles
constexpr int kG0 = kFC + 1;                  // profiles gated by class, 4 sides x 3 classes
constexpr int kP0 = kG0 + 12 * kSideDims;     // one-hot position
constexpr int kR0 = kP0 + kPatches;           // row mod 3, one-hot
constexpr int kK0 = kR0 + 3;                  // column mod 3, one-hot
constexpr int kPC = kK0 + 3;                  // minus the one-hot masses
constexpr int kC0 = kPC + 1;                  // position code
constexpr int kO0 = kC0 + kCodeDims;          // head output
constexpr int kA0 = kO0 + kCodeDims;          // anchors up to kWidth
constexpr int kAnchors = kWidth - kA0;
static_assert(kAnchors % 2 == 0);

// Head dimensions of the edge head: 4 slots x 3 classes x profile, then the
// positional part.
constexpr int kContent = 12 * kSideDims;
constexpr int kPositional = kContent;
static_assert(kPositional + kPatches <= kHeadDim);

// Per slot: query side, key side, class shift from query to key. The key
// sits below, above, right of and left of the query. Top and bottom profiles
// are gated by row class, left and right by column class.
struct Slot {
  int qside;
  int kside;
  int shift;
};
constexpr Slot kSlots[4] = {{1, 0, 1}, {0, 1, 2}, {3, 2, 1}, {2, 3, 2}};

int gated(int side, int cls, int d) { return kG0 + (side * 3 + cls) * kSideDims + d; }

int hadamard(int i, int j) { return (std::popcount(static_cast<unsigned>(i & j)) & 1) ? -1 : 1; }

// Orthogonal zero-sum codes; the four side neighbours of a patch and the
// patch itself fall into distinct classes.
double code(int patch, int h) {
  const int cls = (patch / kGrid % 3) * 3 + patch % kGrid % 3;
  return hadamard(cls + 1, h);
}

bool side_neighbors(int a, int b) {
  const int dr = std::abs(a / kGrid - b / kGrid);
  const int dc = std::abs(a % kGrid - b % kGrid);
  return dr + dc == 1;
}

// (row, col) of pixel i along a side, `depth` rows in from the edge.
std::pair<int, int> side_pixel(int side, int i, int depth) {
  switch (side) {
    case 0: return {depth, i};
    case 1: return {kPatch - 1 - depth, i};
    case 2: return {i, depth};
    default: return {i, kPatch - 1 - depth};
  }
}

// Linear extrapolation of the two outermost rows to the patch edge, so that
// facing sides of adjacent patches estimate the same line.
constexpr double kDepthWeight[2] = {1.5, -0.5};

// Weight of side pixel i in smoothed step k, with the kernel scaled to unit
// energy over the steps.
double step_weight(int k, int i, double sigma) {
  auto g = [&](double d) { return std::exp(-0.5 * d * d / (sigma * sigma)); };
  double energy = 0.0;
  for (int d = -(kPatch - 1); d <= kPatch - 1; ++d) energy += g(d) * g(d);
  const double norm = 1.0 / std::sqrt(energy);
  const int center = 2 * k;
  double w = 0.0;
  if (i >= 1) w += g(center - (i - 1));
  if (i <= kPatch - 2) w -= g(center - i);
  return w * norm;
}

double constant_sigma(const EdgeDetectorParams& p) {
  const double sq = kAnchors * p.anchor * p.anchor + 3.0 + 9.0 + kCodeDims * p.code_scale * p.code_scale;
  return std::sqrt(sq / kWidth);
}

}  // namespace

ViTConfig hand_config() {
  ViTConfig c;
  c.image_size = 8;
  c.patch_size = 8;
  c.n_layers = 1;
  c.n_heads = 1;
  c.width = 2;
  c.mlp_ratio = 1;
  c.uses_cls_token = true;
  c.layer_norm_eps = 1e-6;
  c.activation = Activation::gelu;
  c.pixel_mean = {0.0f, 0.0f, 0.0f};
  c.pixel_std = {1.0f, 1.0f, 1.0f};
  return c;
}

TensorArchive hand_archive() {
  TensorArchive a;
  std::vector<float> patch(2 * 3 * 64, 0.0f);
  for (int i = 0; i < 64; ++i) {
    patch[static_cast<std::size_t>(0 * 192 + 0 * 64 + i)] = 1.0f / 64.0f;  // out 0 <- red
    patch[static_cast<std::size_t>(1 * 192 + 1 * 64 + i)] = 1.0f / 64.0f;  // out 1 <- green
  }
  a.insert("patch_embed.weight", make({2, 3, 8, 8}, patch));
  a.insert("patch_embed.bias", make({2}, {0.1f, -0.2f}));
  a.insert("cls_token", make({2}, {0.5f, -0.25f}));
  a.insert("pos_embed", make({2, 2}, {0.0f, 0.1f, 0.2f, 0.0f}));
  a.insert("blocks.0.norm1.weight", make({2}, {1.0f, 2.0f}));
  a.insert("blocks.0.norm1.bias", make({2}, {0.0f, 0.5f}));
  a.insert("blocks.0.attn.q.weight", make({2, 2}, {1.0f, 0.5f, -0.5f, 1.0f}));
  a.insert("blocks.0.attn.q.bias", make({2}, {0.1f, 0.0f}));
  a.insert("blocks.0.attn.k.weight", make({2, 2}, {0.8f, -0.2f, 0.3f, 1.2f}));
  a.insert("blocks.0.attn.k.bias", make({2}, {0.0f, -0.1f}));
  a.insert("blocks.0.attn.v.weight", make({2, 2}, {1.0f, 0.0f, 0.5f, -1.0f}));
  a.insert("blocks.0.attn.v.bias", make({2}, {0.05f, 0.0f}));
  a.insert("blocks.0.attn.proj.weight", make({2, 2}, {0.7f, 0.1f, -0.2f, 0.9f}));
  a.insert("blocks.0.attn.proj.bias", make({2}, {0.0f, 0.02f}));
  a.insert("blocks.0.norm2.weight", make({2}, {1.5f, 0.5f}));
  a.insert("blocks.0.norm2.bias", make({2}, {-0.1f, 0.1f}));
  a.insert("blocks.0.mlp.fc1.weight", make({2, 2}, {0.3f, -0.2f, 0.1f, 0.4f}));
  a.insert("blocks.0.mlp.fc1.bias", make({2}, {0.0f, 0.1f}));
  a.insert("blocks.0.mlp.fc2.weight", make({2, 2}, {0.5f, 0.2f, -0.3f, 0.6f}));
  a.insert("blocks.0.mlp.fc2.bias", make({2}, {0.01f, 0.0f}));
  a.insert("norm.weight", make({2}, {1.0f, 1.0f}));
  a.insert("norm.bias", make({2}, {0.0f, 0.0f}));
  return a;
}

ViTConfig edge_detector_config() {
  ViTConfig c;
  c.image_size = 224;
  c.patch_size = kPatch;
  c.n_layers = 2;
  c.n_heads = kHeads;
  c.width = kWidth;
  c.mlp_ratio = 1;
  c.uses_cls_token = false;
  c.layer_norm_eps = 1e-6;
  c.activation = Activation::gelu;
  c.pixel_mean = {0.0f, 0.0f, 0.0f};
  c.pixel_std = {1.0f, 1.0f, 1.0f};
  return c;
}

ViTModel make_edge_detector(const EdgeDetectorParams& p) {
  const ViTConfig cfg = edge_detector_config();
  std::map<std::string, Tensor> t;
  for (const TensorSpec& spec : tensor_layout(cfg)) t.emplace(spec.name, Tensor::zeros(spec.shape));
  auto set = [&](const std::string& name, int row, int col, double v) {
    Tensor& x = t.at(name);
    const auto cols = static_cast<std::size_t>(x.shape.size() > 1 ? x.shape[1] : 1);
    x.values[static_cast<std::size_t>(row) * cols + static_cast<std::size_t>(col)] = static_cast<float>(v);
  };
  auto set1 = [&](const std::string& name, int i, double v) { set(name, i, 0, v); };

  // Embedding.
  auto& patch_w = t.at("patch_embed.weight").values;
  constexpr int kPixels = kPatch * kPatch;
  for (int side = 0; side < 4; ++side) {
    for (int k = 0; k < kSteps; ++k) {
      for (int c = 0; c < 3; ++c) {
        const int out = kF0 + side * kSideDims + k * 3 + c;
        for (int i = 0; i < kPatch; ++i)
          for (int depth = 0; depth < 2; ++depth) {
            const double w = step_weight(k, i, p.smoothing_sigma) * kDepthWeight[depth];
            const auto [r, col] = side_pixel(side, i, depth);
            const std::size_t in = static_cast<std::size_t>(c * kPixels + r * kPatch + col);
            patch_w[static_cast<std::size_t>(out) * 3 * kPixels + in] += static_cast<float>(w);
            patch_w[static_cast<std::size_t>(kFC) * 3 * kPixels + in] -= static_cast<float>(w);
          }
      }
    }
  }
  for (int i = 0; i < kAnchors; ++i) set1("patch_embed.bias", kA0 + i, i % 2 ? -p.anchor : p.anchor);
  for (int n = 0; n < kPatches; ++n) {
    set("pos_embed", n, kP0 + n, 1.0);
    set("pos_embed", n, kR0 + n / kGrid % 3, 1.0);
    set("pos_embed", n, kK0 + n % kGrid % 3, 1.0);
    set("pos_embed", n, kPC, -3.0);
    for (int h = 0; h < kCodeDims; ++h) set("pos_embed", n, kC0 + h, p.code_scale * code(n, h));
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string b = "blocks." + std::to_string(l) + ".";
    for (int i = 0; i < kWidth; ++i) {
      set1(b + "norm1.weight", i, 1.0);
      set1(b + "norm2.weight", i, 1.0);
    }
  }
  for (int i = 0; i < kWidth; ++i) set1("norm.weight", i, 1.0);

  // LayerNorm divides the residual by sigma0 throughout.
  const double sigma0 = constant_sigma(p);

  // Block 0 MLP: copy each profile into the slot of its token's class and
  // clear the ungated profile. GELU(u) - GELU(-u) = u, and both terms vanish
  // when the gate pulls u far below zero.
  int unit = 0;
  for (int side = 0; side < 4; ++side) {
    const int gate0 = side < 2 ? kR0 : kK0;
    for (int cls = 0; cls < 3; ++cls) {
      for (int d = 0; d < kSideDims; ++d) {
        for (int sign : {1, -1}) {
          set("blocks.0.mlp.fc1.weight", unit, kF0 + side * kSideDims + d, sign * sigma0);
          set("blocks.0.mlp.fc1.weight", unit, gate0 + cls, kGate * sigma0);
          set1("blocks.0.mlp.fc1.bias", unit, -kGate);
          set("blocks.0.mlp.fc2.weight", gated(side, cls, d), unit, sign);
          ++unit;
        }
      }
    }
  }
  for (int i = kF0; i < kFC; ++i) {
    for (int sign : {1, -1}) {
      set("blocks.0.mlp.fc1.weight", unit, i, sign * sigma0);
      set("blocks.0.mlp.fc2.weight", i, unit, -sign);
      ++unit;
    }
  }

  // Block 1, head 0.
  const double root = std::pow(static_cast<double>(kHeadDim), 0.25);
  const double content = std::sqrt(p.match_gain) * root * sigma0;
  for (int slot = 0; slot < 4; ++slot) {
    const Slot& s = kSlots[slot];
    for (int cls = 0; cls < 3; ++cls) {
      const int qcls = (cls + 3 - s.shift) % 3;
      for (int d = 0; d < kSideDims; ++d) {
        const int row = (slot * 3 + cls) * kSideDims + d;
        set("blocks.1.attn.q.weight", row, gated(s.qside, qcls, d), content);
        set("blocks.1.attn.k.weight", row, gated(s.kside, cls, d), content);
      }
    }
  }
  for (int n = 0; n < kPatches; ++n) {
    set("blocks.1.attn.q.weight", kPositional + n, kP0 + n, root * sigma0);
    for (int m = 0; m < kPatches; ++m)
      if (!side_neighbors(n, m)) set("blocks.1.attn.k.weight", kPositional + n, kP0 + m, p.mask_logit * root * sigma0);
    for (int h = 0; h < kCodeDims; ++h) set("blocks.1.attn.v.weight", h, kP0 + n, code(n, h) * sigma0);
  }
  for (int h = 0; h < kCodeDims; ++h) set("blocks.1.attn.proj.weight", kO0 + h, h, p.output_scale);

  // Block 1 MLP clears the gated profiles, their sum and the one-hot
  // positions; the bias clears the constants.
  unit = 0;
  for (int i = kFC; i < kR0; ++i) {
    for (int sign : {1, -1}) {
      set("blocks.1.mlp.fc1.weight", unit, i, sign * sigma0);
      set("blocks.1.mlp.fc2.weight", i, unit, -sign);
      ++unit;
    }
  }
  for (int i = 0; i < kAnchors; ++i) set1("blocks.1.mlp.fc2.bias", kA0 + i, i % 2 ? p.anchor : -p.anchor);
  set1("blocks.1.mlp.fc2.bias", kPC, 3.0);

  TensorArchive a;
  for (auto& [name, tensor] : t) a.insert(name, std::move(tensor));
  a.metadata()["init"] = "edge_detector";
  return ViTModel::from_archive(a, cfg);
}

Eigen::VectorXd side_profile(const Image& image, int patch, int side, const EdgeDetectorParams& params) {
  const int x0 = patch % kGrid * kPatch;
  const int y0 = patch / kGrid * kPatch;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kSideDims);
  for (int k = 0; k < kSteps; ++k) {
    for (int i = 0; i < kPatch; ++i)
      for (int depth = 0; depth < 2; ++depth) {
        const double w = step_weight(k, i, params.smoothing_sigma) * kDepthWeight[depth];
        const auto [r, c] = side_pixel(side, i, depth);
        const Rgb px = image.at(x0 + c, y0 + r);
        out(k * 3 + 0) += w * px.r / 255.0;
        out(k * 3 + 1) += w * px.g / 255.0;
        out(k * 3 + 2) += w * px.b / 255.0;
      }
  }
  return out;
}

}  // namespace gestalt::testing
