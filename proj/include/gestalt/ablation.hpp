#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestalt/probe.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

enum class DatasetVariant { object, scrambled_orientation, scrambled_location };
std::string_view to_string(DatasetVariant v);
DatasetVariant parse_dataset_variant(std::string_view text);

// The k highest scores among layers 0..up_to_layer, ties broken by lower
// layer then lower head. k = 0 yields an empty set.
std::vector<HeadId> select_top_heads(const Eigen::MatrixXd& scores, int k, int up_to_layer);

// n head sets with the same number of heads per layer as `reference`, drawn
// uniformly without replacement within each layer. A draw equal to the
// reference is rejected unless every layer of the reference is full.
std::vector<std::vector<HeadId>> random_control_sets(std::span<const HeadId> reference, int n_layers, int n_heads,
                                                     int n, std::uint64_t seed);

// A stimulus prepared for probing: the image, the patches whose activations
// are needed, and the pairs to classify.
struct PairedStimulus {
  std::string id;
  Image image;
  std::vector<int> patches;
  std::vector<PatchPair> pairs;
};

// Builds a PairSet from fresh forward passes stopped at `layer`.
PairSet collect_pairs(const ViTModel& model, std::span<const PairedStimulus> data, int layer, ReadoutMode readout,
                      const HeadAblationSpec* ablation = nullptr, int jobs = 1);

struct AblationRun {
  int layer = 0;
  std::vector<HeadId> heads;
  DatasetVariant variant = DatasetVariant::object;
  int control_set = -1;  // -1 for the continuity-head set
  double baseline = 0.0;
  double ablated = 0.0;
  double delta = 0.0;  // baseline - ablated
};

struct AblationContext {
  const ViTModel* model = nullptr;
  const HeadMeanStore* means = nullptr;
  ReadoutMode readout = ReadoutMode::residual;
  int jobs = 1;
};

// Evaluates a fixed probe trained at `layer` with `heads` mean-ablated.
// `baseline` is the unablated accuracy on the same data; it is computed when
// absent.
AblationRun run_ablation(const ProbeParams& probe, const AblationContext& ctx, int layer,
                         std::span<const HeadId> heads, std::span<const PairedStimulus> data, DatasetVariant variant,
                         std::optional<double> baseline = std::nullopt);

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};

// Linear interpolation between order statistics (type 7).
double quantile_type7(std::span<const double> values, double q);
Quartiles quartiles(std::span<const double> values);

struct SelectivityRecord {
  int layer = 0;
  double delta_object = 0.0;
  std::map<DatasetVariant, double> delta_scrambled;
  std::map<DatasetVariant, double> selectivity;
  std::map<DatasetVariant, std::vector<double>> control_selectivity;
  std::map<DatasetVariant, Quartiles> control_quartiles;
  // Continuity-head selectivity above the control upper quartile.
  std::map<DatasetVariant, bool> flagged;
};

struct SelectivityReport {
  std::vector<SelectivityRecord> layers;
  // Layer with the largest selectivity per scrambled variant; ties go to the
  // lower layer.
  std::map<DatasetVariant, int> best_layer;
};

// Groups runs by (layer, control_set). Every layer needs an object run and a
// run for each scrambled variant present anywhere in `runs`, both for the
// reference set and for every control set.
SelectivityReport selectivity_report(std::span<const AblationRun> runs);

}  // namespace gestalt
