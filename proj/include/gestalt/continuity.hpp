#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestalt/stimulus.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

// Perimeter patches of `object` that are 8-adjacent to `target`.
std::vector<int> neighbor_set(const PatchGrid& grid, int target, int object);

// Largest attention from any neighbor token (query) to the target token (key).
double max_neighbor_attention(const AttentionRecord& attn, int layer, int head, std::span<const int> neighbor_tokens,
                              int target_token);

// max(1, base / control). A zero control is treated as 1e-30.
double floored_ratio(double base, double control);

enum class Aggregation {
  per_patch,  // floored ratio per perimeter patch, averaged
  pooled      // floored ratio of the summed maxima
};
Aggregation parse_aggregation(std::string_view text);
std::string_view to_string(Aggregation a);

enum class ControlMode {
  random_rotation,    // 90 or 270 degrees, drawn per target
  max_over_rotations  // per head, whichever rotation draws more attention
};

struct ContinuityOptions {
  TrajectoryAxis axis = TrajectoryAxis::x;
  Aggregation aggregation = Aggregation::per_patch;
  ControlMode control = ControlMode::random_rotation;
  // Perimeter targets evaluated per stimulus; 0 uses all of them.
  int max_targets = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// S(t) for every (layer, head) on one stimulus, one matrix per entry of
// `ts`. An empty matrix marks a t for which no target was usable; an empty
// result means the stimulus has no perimeter patch with neighbors.
struct StimulusSensitivity {
  std::vector<Eigen::MatrixXd> scores;
  std::vector<int> targets_used;
};

StimulusSensitivity stimulus_sensitivity(const ViTModel& model, const Stimulus& stim, std::span<const int> ts,
                                         const ContinuityOptions& options, std::uint64_t stimulus_seed);

struct HeadScoreMatrix {
  std::string model;
  std::string dataset;
  int t = 0;
  Eigen::MatrixXd scores;  // layers x heads
  std::size_t n_used = 0;
  std::size_t n_skipped = 0;
};

// S(t) averaged over stimuli for every t in `ts`. Each stimulus draws its
// control rotations from derive_seed(options.seed, "continuity", stim.seed),
// and the average is taken over sorted values, so the result does not depend
// on the order of `stimuli`.
std::vector<HeadScoreMatrix> continuity_sweep(const ViTModel& model, std::span<const Stimulus> stimuli,
                                              std::span<const int> ts, const ContinuityOptions& options);

HeadScoreMatrix head_scores(const ViTModel& model, std::span<const Stimulus> stimuli, const ContinuityOptions& options);

struct SensitivityCurve {
  HeadId head;
  std::vector<int> t;
  std::vector<double> S;
  std::string dataset;
  std::vector<std::size_t> n;
};

SensitivityCurve tuning_curve(std::span<const HeadScoreMatrix> sweep, HeadId head);

// ---------------------------------------------------------------------------
// Statistics

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

// Mean rank for ties, ranks starting at 1.
std::vector<double> average_ranks(std::span<const double> v);
Correlation pearson(std::span<const double> a, std::span<const double> b);
// Pearson on average ranks; p from the same Student-t approximation.
Correlation spearman(std::span<const double> a, std::span<const double> b);
// Two-sided p-value of a correlation coefficient over n samples.
double correlation_p_value(double r, std::size_t n);

struct CorrelationReport {
  std::string dataset_a;
  std::string dataset_b;
  std::string model;
  Correlation pearson;
  Correlation spearman;
  std::size_t n = 0;
};

CorrelationReport correlate_scores(const HeadScoreMatrix& a, const HeadScoreMatrix& b);

}  // namespace gestalt
