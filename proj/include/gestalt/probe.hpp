#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gestalt/stimulus.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

// Quadratic same-object classifier sigma(x^T W y + b) with symmetric W.
struct ProbeParams {
  Eigen::MatrixXd W;
  double b = 0.0;

  static ProbeParams zeros(int dim);
  int dim() const { return static_cast<int>(W.rows()); }
};

// Evaluated as 0.5 (x^T W y + y^T W x) + b, which is exactly symmetric in
// (x, y) under floating point.
double probe_logit(const ProbeParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y);
double probe_forward(const ProbeParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& W);

// exp of the Shannon entropy of the normalized singular values; 0 for a zero
// matrix.
double effective_rank(const Eigen::MatrixXd& W);

// ---------------------------------------------------------------------------
// Pair sampling

struct PatchPair {
  int a = 0;  // patch indices
  int b = 0;
  bool same = false;
  friend bool operator==(const PatchPair&, const PatchPair&) = default;
};

struct PairSampling {
  std::vector<PatchPair> pairs;
  // Set when the stimulus cannot contribute pairs.
  std::optional<std::string> skipped;
};

enum class PairLocality {
  any,
  eight_neighbors,  // paired patches touch, corners included
  four_neighbors    // paired patches share a side
};
PairLocality parse_pair_locality(std::string_view text);
std::string_view to_string(PairLocality locality);

struct PairSamplingOptions {
  bool balance = true;
  PairLocality locality = PairLocality::any;
  // Upper bound on pairs per stimulus, split evenly between the classes;
  // 0 keeps every pair.
  int max_pairs = 32;
};

// Patches covered by both objects are excluded. Same-object pairs are
// unordered pairs of distinct patches of one object; different-object pairs
// take one patch from each object. With balancing the larger class is cut
// down so that the two counts differ by at most one.
PairSampling sample_pairs(const PatchGrid& grid, std::uint64_t seed, const PairSamplingOptions& options = {});

struct PairRef {
  int x = 0;  // rows of PairSet::features()
  int y = 0;
  bool same = false;
  int stimulus = 0;
};

class PairSet {
 public:
  PairSet() = default;
  PairSet(int dim, int layer) : dim_(dim), layer_(layer) {}

  // `patch_rows(k)` holds the activation of patch `patch_index[k]`.
  void add(const std::string& stimulus_id, const MatrixF& patch_rows, std::span<const int> patch_index,
           std::span<const PatchPair> pairs);

  int dim() const { return dim_; }
  int layer() const { return layer_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  std::size_t count_same() const;

  const std::vector<PairRef>& pairs() const { return pairs_; }
  const std::vector<std::string>& stimulus_ids() const { return ids_; }
  const std::vector<Eigen::VectorXf>& features() const { return features_; }

  // Same pairs with every label inverted.
  PairSet flipped() const;

 private:
  int dim_ = 0;
  int layer_ = 0;
  std::vector<Eigen::VectorXf> features_;
  std::vector<PairRef> pairs_;
  std::vector<std::string> ids_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double gamma = 0.2;
  std::vector<int> milestones = {10, 15};
  int batch_size = 256;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 0 is the state before training
  double loss = 0.0;
  double accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  ProbeParams params;
  std::vector<EpochLog> history;
};

struct LossGradient {
  double loss = 0.0;
  Eigen::MatrixXd dW;
  double db = 0.0;
};

// Mean binary cross-entropy over the listed pairs plus 0.5 * weight_decay *
// ||W||_F^2, and its gradient with respect to (W, b).
LossGradient probe_loss_gradient(const ProbeParams& p, const PairSet& set, std::span<const std::size_t> indices,
                                 double weight_decay = 0.0);

// Adam with L2 weight decay on W (not b), step learning-rate decay at the
// milestones, W re-symmetrized after every step. Zero initialization.
TrainResult train_probe(const PairSet& set, const TrainConfig& config);

struct ProbeEval {
  double accuracy = 0.0;
  double accuracy_same = 0.0;
  double accuracy_different = 0.0;
  double majority_baseline = 0.0;
  double loss = 0.0;
  std::size_t n = 0;
  std::size_t n_same = 0;
};

// "same" is predicted when the probability exceeds 0.5.
ProbeEval eval_probe(const ProbeParams& p, const PairSet& set);

void save_probe(const std::filesystem::path& path, const ProbeParams& p,
                const std::map<std::string, std::string>& metadata = {});
ProbeParams load_probe(const std::filesystem::path& path);

}  // namespace gestalt
