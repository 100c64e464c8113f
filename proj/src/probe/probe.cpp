#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "gestalt/error.hpp"
#include "gestalt/probe.hpp"
#include "gestalt/random.hpp"

namespace gestalt {

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Batch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  Eigen::VectorXd label;
};

Batch gather(const PairSet& set, std::span<const std::size_t> indices) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b{Eigen::MatrixXd(n, set.dim()), Eigen::MatrixXd(n, set.dim()), Eigen::VectorXd(n)};
  const auto& feats = set.features();
  for (Eigen::Index r = 0; r < n; ++r) {
    const PairRef& p = set.pairs()[indices[static_cast<std::size_t>(r)]];
    b.x.row(r) = feats[static_cast<std::size_t>(p.x)].cast<double>().transpose();
    b.y.row(r) = feats[static_cast<std::size_t>(p.y)].cast<double>().transpose();
    b.label(r) = p.same ? 1.0 : 0.0;
  }
  return b;
}

Eigen::VectorXd batch_logits(const ProbeParams& p, const Batch& b) {
  const Eigen::MatrixXd xw = b.x * p.W;
  const Eigen::MatrixXd yw = b.y * p.W;
  const Eigen::VectorXd xy = xw.cwiseProduct(b.y).rowwise().sum();
  const Eigen::VectorXd yx = yw.cwiseProduct(b.x).rowwise().sum();
  return (0.5 * (xy + yx)).array() + p.b;
}

void check_dim(const ProbeParams& p, Eigen::Index nx, Eigen::Index ny) {
  if (nx != p.W.rows() || ny != p.W.rows())
    throw ConfigError("probe input dimension mismatch: W is " + std::to_string(p.W.rows()) + ", inputs are " +
                      std::to_string(nx) + " and " + std::to_string(ny));
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Loss and accuracy over the whole set, in fixed-size chunks.
std::pair<double, double> full_pass(const ProbeParams& p, const PairSet& set) {
  constexpr std::size_t kChunk = 4096;
  const auto all = iota_indices(set.size());
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < all.size(); start += kChunk) {
    const std::span<const std::size_t> part(all.data() + start, std::min(kChunk, all.size() - start));
    const Batch b = gather(set, part);
    const Eigen::VectorXd z = batch_logits(p, b);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      loss += softplus(z(i)) - b.label(i) * z(i);
      correct += ((z(i) > 0.0) == (b.label(i) > 0.5)) ? 1 : 0;
    }
  }
  const double n = static_cast<double>(set.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace

ProbeParams ProbeParams::zeros(int dim) {
  if (dim <= 0) throw ConfigError("probe dimension must be positive");
  return {Eigen::MatrixXd::Zero(dim, dim), 0.0};
}

double probe_logit(const ProbeParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& y) {
  check_dim(p, x.size(), y.size());
  const double xy = x.dot(p.W * y);
  const double yx = y.dot(p.W * x);
  return 0.5 * (xy + yx) + p.b;
}

double probe_forward(const ProbeParams& p, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y) {
  return sigmoid(probe_logit(p, x, y));
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& W) {
  if (W.rows() != W.cols()) throw ConfigError("symmetrize needs a square matrix");
  return 0.5 * (W + W.transpose());
}

double effective_rank(const Eigen::MatrixXd& W) {
  if (!W.allFinite()) throw NumericError("effective rank of a non-finite matrix");
  if (W.size() == 0) return 0.0;
  const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(W).singularValues();
  const double total = s.sum();
  if (total <= 0.0) return 0.0;
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double q = s(i) / total;
    if (q > 0.0) entropy -= q * std::log(q);
  }
  return std::exp(entropy);
}

PairLocality parse_pair_locality(std::string_view text) {
  if (text == "any") return PairLocality::any;
  if (text == "eight_neighbors") return PairLocality::eight_neighbors;
  if (text == "four_neighbors") return PairLocality::four_neighbors;
  throw ConfigError("unknown pair locality '" + std::string(text) + "'");
}

std::string_view to_string(PairLocality locality) {
  switch (locality) {
    case PairLocality::any: return "any";
    case PairLocality::eight_neighbors: return "eight_neighbors";
    case PairLocality::four_neighbors: return "four_neighbors";
  }
  return "any";
}

PairSampling sample_pairs(const PatchGrid& grid, std::uint64_t seed, const PairSamplingOptions& options) {
  if (grid.object_patches.size() != 2)
    throw DataError("pair sampling needs exactly two objects, found " + std::to_string(grid.object_patches.size()));
  if (options.max_pairs < 0) throw ConfigError("max_pairs must be non-negative");

  std::array<std::vector<int>, 2> own;
  for (int o = 0; o < 2; ++o) {
    std::vector<int> mine = grid.object_patches[static_cast<std::size_t>(o)];
    std::vector<int> other = grid.object_patches[static_cast<std::size_t>(1 - o)];
    std::sort(mine.begin(), mine.end());
    std::sort(other.begin(), other.end());
    std::set_difference(mine.begin(), mine.end(), other.begin(), other.end(), std::back_inserter(own[o]));
  }
  PairSampling out;
  for (int o = 0; o < 2; ++o) {
    if (own[o].empty()) {
      out.skipped = "object " + std::to_string(o) + " has no patch of its own";
      return out;
    }
  }

  auto local = [&](int a, int b) {
    const int dr = std::abs(grid.row_of(a) - grid.row_of(b));
    const int dc = std::abs(grid.col_of(a) - grid.col_of(b));
    switch (options.locality) {
      case PairLocality::any: return true;
      case PairLocality::eight_neighbors: return std::max(dr, dc) == 1;
      case PairLocality::four_neighbors: return dr + dc == 1;
    }
    return true;
  };
  std::vector<PatchPair> same;
  for (const auto& patches : own)
    for (std::size_t i = 0; i < patches.size(); ++i)
      for (std::size_t j = i + 1; j < patches.size(); ++j)
        if (local(patches[i], patches[j])) same.push_back({patches[i], patches[j], true});
  std::vector<PatchPair> diff;
  for (int a : own[0])
    for (int b : own[1])
      if (local(a, b)) diff.push_back({a, b, false});
  if (same.empty() && diff.empty()) {
    out.skipped = "no patch pair satisfies the locality constraint";
    return out;
  }

  Rng rng(seed);
  std::shuffle(same.begin(), same.end(), rng.engine());
  std::shuffle(diff.begin(), diff.end(), rng.engine());

  std::size_t n_same = same.size();
  std::size_t n_diff = diff.size();
  if (options.max_pairs > 0) {
    const auto half = static_cast<std::size_t>(options.max_pairs / 2);
    n_same = std::min(n_same, half);
    n_diff = std::min(n_diff, static_cast<std::size_t>(options.max_pairs) - half);
  }
  if (options.balance) {
    const std::size_t keep = std::max<std::size_t>(std::min(n_same, n_diff), 1);
    n_same = std::min(n_same, keep);
    n_diff = std::min(n_diff, keep);
  }
  out.pairs.assign(same.begin(), same.begin() + static_cast<std::ptrdiff_t>(n_same));
  out.pairs.insert(out.pairs.end(), diff.begin(), diff.begin() + static_cast<std::ptrdiff_t>(n_diff));
  return out;
}

void PairSet::add(const std::string& stimulus_id, const MatrixF& patch_rows, std::span<const int> patch_index,
                  std::span<const PatchPair> pairs) {
  if (patch_rows.cols() != dim_)
    throw DataError("activation width " + std::to_string(patch_rows.cols()) + " does not match pair set width " +
                    std::to_string(dim_));
  if (static_cast<std::size_t>(patch_rows.rows()) != patch_index.size())
    throw DataError("patch index list does not match the activation rows");
  std::unordered_map<int, int> source;
  for (std::size_t k = 0; k < patch_index.size(); ++k) source.emplace(patch_index[k], static_cast<int>(k));

  const int stim = static_cast<int>(ids_.size());
  ids_.push_back(stimulus_id);
  std::unordered_map<int, int> stored;
  auto row_for = [&](int patch) {
    if (auto it = stored.find(patch); it != stored.end()) return it->second;
    const auto src = source.find(patch);
    if (src == source.end())
      throw DataError("stimulus " + stimulus_id + ": no activation for patch " + std::to_string(patch));
    features_.push_back(patch_rows.row(src->second).transpose());
    const int row = static_cast<int>(features_.size()) - 1;
    stored.emplace(patch, row);
    return row;
  };
  for (const PatchPair& p : pairs) {
    const int x = row_for(p.a);
    const int y = row_for(p.b);
    pairs_.push_back({x, y, p.same, stim});
  }
}

std::size_t PairSet::count_same() const {
  return static_cast<std::size_t>(std::count_if(pairs_.begin(), pairs_.end(), [](const PairRef& p) { return p.same; }));
}

PairSet PairSet::flipped() const {
  PairSet out = *this;
  for (PairRef& p : out.pairs_) p.same = !p.same;
  return out;
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  for (int m : milestones)
    if (m <= 0) throw ConfigError("learning-rate milestones must be positive epochs");
}

LossGradient probe_loss_gradient(const ProbeParams& p, const PairSet& set, std::span<const std::size_t> indices,
                                 double weight_decay) {
  if (indices.empty()) throw DataError("empty batch");
  check_dim(p, set.dim(), set.dim());
  const Batch b = gather(set, indices);
  const Eigen::VectorXd z = batch_logits(p, b);
  const double n = static_cast<double>(indices.size());
  LossGradient out;
  Eigen::VectorXd g(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out.loss += softplus(z(i)) - b.label(i) * z(i);
    g(i) = (sigmoid(z(i)) - b.label(i)) / n;
  }
  out.loss /= n;
  out.loss += 0.5 * weight_decay * p.W.squaredNorm();
  const Eigen::MatrixXd gx = b.x.array().colwise() * g.array();
  const Eigen::MatrixXd xy = gx.transpose() * b.y;
  out.dW = 0.5 * (xy + xy.transpose()) + weight_decay * p.W;
  out.db = g.sum();
  return out;
}

TrainResult train_probe(const PairSet& set, const TrainConfig& config) {
  config.validate();
  if (set.empty()) throw DataError("cannot train a probe on an empty pair set");
  const std::size_t n_same = set.count_same();
  if (n_same == 0 || n_same == set.size()) throw DataError("probe training needs both classes");

  TrainResult result;
  result.params = ProbeParams::zeros(set.dim());
  ProbeParams& p = result.params;
  Eigen::MatrixXd mW = Eigen::MatrixXd::Zero(set.dim(), set.dim());
  Eigen::MatrixXd vW = mW;
  double mb = 0.0;
  double vb = 0.0;
  long step = 0;

  auto log_epoch = [&](int epoch, double lr) {
    const auto [loss, acc] = full_pass(p, set);
    if (!std::isfinite(loss)) throw NumericError("probe loss became non-finite at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, loss, acc, lr});
  };
  log_epoch(0, config.learning_rate);

  std::vector<std::size_t> order = iota_indices(set.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto passed = std::count_if(config.milestones.begin(), config.milestones.end(),
                                      [&](int m) { return m <= epoch; });
    const double lr = config.learning_rate * std::pow(config.gamma, static_cast<double>(passed));
    Rng rng(derive_seed(config.seed, "probe-epoch", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> batch(order.data() + start, std::min(bs, order.size() - start));
      const LossGradient g = probe_loss_gradient(p, set, batch, config.weight_decay);
      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      mW = config.beta1 * mW + (1.0 - config.beta1) * g.dW;
      vW = config.beta2 * vW + (1.0 - config.beta2) * g.dW.cwiseAbs2();
      // Bias term: the data gradient only.
      mb = config.beta1 * mb + (1.0 - config.beta1) * g.db;
      vb = config.beta2 * vb + (1.0 - config.beta2) * g.db * g.db;
      p.W.array() -= lr * (mW.array() / c1) / ((vW.array() / c2).sqrt() + config.adam_eps);
      p.b -= lr * (mb / c1) / (std::sqrt(vb / c2) + config.adam_eps);
      p.W = symmetrize(p.W);
    }
    log_epoch(epoch + 1, lr);
  }
  return result;
}

ProbeEval eval_probe(const ProbeParams& p, const PairSet& set) {
  if (set.empty()) throw DataError("cannot evaluate a probe on an empty pair set");
  check_dim(p, set.dim(), set.dim());
  ProbeEval out;
  out.n = set.size();
  const auto all = iota_indices(set.size());
  std::size_t correct_same = 0;
  std::size_t correct_diff = 0;
  double loss = 0.0;
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < all.size(); start += kChunk) {
    const std::span<const std::size_t> part(all.data() + start, std::min(kChunk, all.size() - start));
    const Batch b = gather(set, part);
    const Eigen::VectorXd z = batch_logits(p, b);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const bool label = b.label(i) > 0.5;
      const bool said_same = z(i) > 0.0;
      loss += softplus(z(i)) - b.label(i) * z(i);
      if (label) {
        ++out.n_same;
        correct_same += said_same ? 1 : 0;
      } else {
        correct_diff += said_same ? 0 : 1;
      }
    }
  }
  const double n = static_cast<double>(out.n);
  const std::size_t n_diff = out.n - out.n_same;
  out.accuracy = static_cast<double>(correct_same + correct_diff) / n;
  out.accuracy_same = out.n_same ? static_cast<double>(correct_same) / static_cast<double>(out.n_same) : 0.0;
  out.accuracy_different = n_diff ? static_cast<double>(correct_diff) / static_cast<double>(n_diff) : 0.0;
  out.majority_baseline = static_cast<double>(std::max(out.n_same, n_diff)) / n;
  out.loss = loss / n;
  return out;
}

void save_probe(const std::filesystem::path& path, const ProbeParams& p,
                const std::map<std::string, std::string>& metadata) {
  const std::int64_t d = p.dim();
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = p.W.cast<float>();
  TensorArchive a;
  a.insert("W", Tensor({d, d}, std::vector<float>(w.data(), w.data() + w.size())));
  a.insert("b", Tensor({1}, {static_cast<float>(p.b)}));
  a.metadata() = metadata;
  a.save(path);
}

ProbeParams load_probe(const std::filesystem::path& path) {
  const TensorArchive a = TensorArchive::load(path);
  const Tensor& w = a.at("W");
  const Tensor& b = a.at("b");
  if (w.shape.size() != 2 || w.shape[0] != w.shape[1] || w.shape[0] <= 0)
    throw DataError("probe checkpoint " + path.string() + ": 'W' must be a square matrix");
  if (b.numel() != 1) throw DataError("probe checkpoint " + path.string() + ": 'b' must hold one value");
  const auto d = static_cast<Eigen::Index>(w.shape[0]);
  ProbeParams p;
  p.W = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.values.data(), d, d)
            .cast<double>();
  p.b = b.values[0];
  return p;
}

}  // namespace gestalt
