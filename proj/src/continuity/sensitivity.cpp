#include <algorithm>
#include <cstdlib>

#include "gestalt/continuity.hpp"
#include "gestalt/error.hpp"
#include "gestalt/parallel.hpp"
#include "gestalt/random.hpp"

namespace gestalt {

namespace {

struct Target {
  int patch = 0;
  std::vector<int> neighbor_tokens;
  int token = 0;
};

// L x H matrix of max neighbor-to-target attention.
Eigen::MatrixXd neighbor_maxima(const AttentionRecord& attn, const Target& target) {
  Eigen::MatrixXd out(attn.layers(), attn.heads());
  for (int l = 0; l < attn.layers(); ++l)
    for (int h = 0; h < attn.heads(); ++h)
      out(l, h) = max_neighbor_attention(attn, l, h, target.neighbor_tokens, target.token);
  return out;
}

}  // namespace

std::vector<int> neighbor_set(const PatchGrid& grid, int target, int object) {
  if (object < 0 || static_cast<std::size_t>(object) >= grid.perimeter_patches.size())
    throw ConfigError("object index out of range");
  if (target < 0 || target >= grid.size()) throw ConfigError("target patch outside the grid");
  const auto& perimeter = grid.perimeter_patches[static_cast<std::size_t>(object)];
  std::vector<int> out;
  const int r0 = grid.row_of(target);
  const int c0 = grid.col_of(target);
  for (int p : perimeter) {
    if (p == target) continue;
    if (std::abs(grid.row_of(p) - r0) <= 1 && std::abs(grid.col_of(p) - c0) <= 1) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double max_neighbor_attention(const AttentionRecord& attn, int layer, int head, std::span<const int> neighbor_tokens,
                              int target_token) {
  if (neighbor_tokens.empty()) throw DataError("empty neighbor set");
  const MatrixF& m = attn.map(layer, head);
  if (target_token < 0 || target_token >= m.cols()) throw ConfigError("target token out of range");
  double best = 0.0;
  for (int n : neighbor_tokens) {
    if (n < 0 || n >= m.rows()) throw ConfigError("neighbor token out of range");
    best = std::max(best, static_cast<double>(m(n, target_token)));
  }
  return best;
}

double floored_ratio(double base, double control) { return std::max(1.0, base / std::max(control, 1e-30)); }

Aggregation parse_aggregation(std::string_view text) {
  if (text == "per_patch") return Aggregation::per_patch;
  if (text == "pooled") return Aggregation::pooled;
  throw ConfigError("unknown aggregation '" + std::string(text) + "' (expected per_patch or pooled)");
}

std::string_view to_string(Aggregation a) { return a == Aggregation::per_patch ? "per_patch" : "pooled"; }

StimulusSensitivity stimulus_sensitivity(const ViTModel& model, const Stimulus& stim, std::span<const int> ts,
                                         const ContinuityOptions& options, std::uint64_t stimulus_seed) {
  const ViTConfig& cfg = model.config();
  const PatchGrid grid = make_patch_grid(stim, cfg.patch_size);

  std::vector<Target> targets;
  for (std::size_t o = 0; o < grid.perimeter_patches.size(); ++o) {
    for (int p : grid.perimeter_patches[o]) {
      const auto nb = neighbor_set(grid, p, static_cast<int>(o));
      if (nb.empty()) continue;
      Target t{p, {}, cfg.token_of_patch(p)};
      for (int n : nb) t.neighbor_tokens.push_back(cfg.token_of_patch(n));
      targets.push_back(std::move(t));
    }
  }
  StimulusSensitivity out;
  if (targets.empty()) return out;
  if (options.max_targets > 0 && targets.size() > static_cast<std::size_t>(options.max_targets)) {
    Rng rng(derive_seed(stimulus_seed, "targets"));
    std::shuffle(targets.begin(), targets.end(), rng.engine());
    targets.resize(static_cast<std::size_t>(options.max_targets));
    std::sort(targets.begin(), targets.end(), [](const Target& a, const Target& b) { return a.patch < b.patch; });
  }

  ForwardOptions fo;
  fo.capture.attention = true;
  const AttentionRecord plain = model.forward(stim.image, fo).attention;

  auto forward_variant = [&](int target, int t, TrajectoryVariant variant, std::optional<int> rotation) {
    const TrajectoryStimulus ts_ = make_trajectory(stim, cfg.patch_size, target, t, variant, stimulus_seed,
                                                   options.axis, rotation);
    return model.forward(ts_.image, fo).attention;
  };

  // Targets whose displaced window would leave the canvas are skipped at that t.
  auto window_fits = [&](int target, int t) {
    const int along = options.axis == TrajectoryAxis::x ? grid.col_of(target) : grid.row_of(target);
    const int start = along * cfg.patch_size + t;
    return start + cfg.patch_size > 0 && start < cfg.image_size;
  };

  const int layers = cfg.n_layers;
  const int heads = cfg.n_heads;
  for (int t : ts) {
    Eigen::MatrixXd ratio_sum = Eigen::MatrixXd::Zero(layers, heads);
    Eigen::MatrixXd base_sum = ratio_sum;
    Eigen::MatrixXd control_sum = ratio_sum;
    int used = 0;
    for (const Target& target : targets) {
      if (!window_fits(target.patch, t)) continue;
      const Eigen::MatrixXd base =
          t == 0 ? neighbor_maxima(plain, target)
                 : neighbor_maxima(forward_variant(target.patch, t, TrajectoryVariant::aligned, {}), target);
      Eigen::MatrixXd control;
      if (options.control == ControlMode::random_rotation) {
        control = neighbor_maxima(forward_variant(target.patch, t, TrajectoryVariant::rotated_control, {}), target);
      } else {
        control = neighbor_maxima(forward_variant(target.patch, t, TrajectoryVariant::rotated_control, 90), target)
                      .cwiseMax(neighbor_maxima(
                          forward_variant(target.patch, t, TrajectoryVariant::rotated_control, 270), target));
      }
      ++used;
      if (options.aggregation == Aggregation::per_patch) {
        ratio_sum += base.binaryExpr(control, [](double b, double c) { return floored_ratio(b, c); });
      } else {
        base_sum += base;
        control_sum += control;
      }
    }
    out.targets_used.push_back(used);
    if (used == 0) {
      out.scores.emplace_back();
    } else if (options.aggregation == Aggregation::per_patch) {
      out.scores.push_back(ratio_sum / used);
    } else {
      out.scores.push_back(base_sum.binaryExpr(control_sum, [](double b, double c) { return floored_ratio(b, c); }));
    }
  }
  return out;
}

std::vector<HeadScoreMatrix> continuity_sweep(const ViTModel& model, std::span<const Stimulus> stimuli,
                                              std::span<const int> ts, const ContinuityOptions& options) {
  if (stimuli.empty()) throw DataError("continuity scoring needs a nonempty dataset");
  if (ts.empty()) throw ConfigError("continuity scoring needs at least one t");
  std::vector<StimulusSensitivity> per(stimuli.size());
  parallel_for(stimuli.size(), options.jobs, [&](std::size_t i) {
    per[i] = stimulus_sensitivity(model, stimuli[i], ts, options,
                                  derive_seed(options.seed, "continuity", stimuli[i].seed));
  });

  const int layers = model.config().n_layers;
  const int heads = model.config().n_heads;
  std::vector<HeadScoreMatrix> out;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    HeadScoreMatrix m;
    m.t = ts[k];
    m.scores = Eigen::MatrixXd::Zero(layers, heads);
    std::vector<const Eigen::MatrixXd*> used;
    for (const auto& s : per) {
      if (s.scores.empty() || s.scores[k].size() == 0) {
        ++m.n_skipped;
      } else {
        used.push_back(&s.scores[k]);
      }
    }
    if (used.empty()) throw DataError("every stimulus was skipped at t=" + std::to_string(ts[k]));
    m.n_used = used.size();
    std::vector<double> column(used.size());
    for (int l = 0; l < layers; ++l) {
      for (int h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < used.size(); ++i) column[i] = (*used[i])(l, h);
        std::sort(column.begin(), column.end());
        double sum = 0.0;
        for (double v : column) sum += v;
        m.scores(l, h) = sum / static_cast<double>(used.size());
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

HeadScoreMatrix head_scores(const ViTModel& model, std::span<const Stimulus> stimuli, const ContinuityOptions& options) {
  const int zero = 0;
  return continuity_sweep(model, stimuli, std::span<const int>(&zero, 1), options).front();
}

SensitivityCurve tuning_curve(std::span<const HeadScoreMatrix> sweep, HeadId head) {
  if (sweep.empty()) throw DataError("empty continuity sweep");
  SensitivityCurve c;
  c.head = head;
  c.dataset = sweep.front().dataset;
  for (const auto& m : sweep) {
    if (head.layer < 0 || head.layer >= m.scores.rows() || head.head < 0 || head.head >= m.scores.cols())
      throw ConfigError("head outside the score matrix");
    c.t.push_back(m.t);
    c.S.push_back(m.scores(head.layer, head.head));
    c.n.push_back(m.n_used);
  }
  return c;
}

}  // namespace gestalt
