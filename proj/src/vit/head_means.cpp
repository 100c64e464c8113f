#include <mutex>

#include "gestalt/error.hpp"
#include "gestalt/parallel.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

HeadMeanStore::HeadMeanStore(const ViTConfig& config, MeanMode mode) : config_(config), mode_(mode) {
  config_.validate();
  sums_.assign(static_cast<std::size_t>(config_.n_layers), Eigen::MatrixXd::Zero(config_.n_tokens(), config_.width));
}

void HeadMeanStore::accumulate(const ForwardResult& result) {
  if (result.head_outputs.size() != static_cast<std::size_t>(config_.n_layers))
    throw ConfigError("head-mean accumulation needs head outputs for all " + std::to_string(config_.n_layers) +
                      " layers");
  for (std::size_t l = 0; l < sums_.size(); ++l) {
    const MatrixF& o = result.head_outputs[l];
    if (o.rows() != sums_[l].rows() || o.cols() != sums_[l].cols())
      throw DataError("head output shape does not match the mean store");
    sums_[l] += o.cast<double>();
  }
  ++count_;
}

void HeadMeanStore::merge(const HeadMeanStore& other) {
  if (!(other.config_ == config_) || other.mode_ != mode_) throw ConfigError("cannot merge incompatible head-mean stores");
  for (std::size_t l = 0; l < sums_.size(); ++l) sums_[l] += other.sums_[l];
  count_ += other.count_;
}

MatrixF HeadMeanStore::mean(HeadId head) const {
  if (count_ == 0) throw DataError("head-mean store is empty");
  if (head.layer < 0 || head.layer >= config_.n_layers || head.head < 0 || head.head >= config_.n_heads)
    throw ConfigError("head (" + std::to_string(head.layer) + ", " + std::to_string(head.head) + ") is out of range");
  const int dh = config_.head_dim();
  const auto block = sums_[static_cast<std::size_t>(head.layer)].middleCols(head.head * dh, dh);
  const double n = static_cast<double>(count_);
  if (mode_ == MeanMode::positional) return (block / n).cast<float>();
  const double rows = static_cast<double>(block.rows());
  return (block.colwise().sum() / (n * rows)).cast<float>();
}

TensorArchive HeadMeanStore::to_archive() const {
  TensorArchive a;
  const std::int64_t tokens = config_.n_tokens();
  const std::int64_t w = config_.width;
  for (std::size_t l = 0; l < sums_.size(); ++l) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mean = sums_[l] / static_cast<double>(count_);
    std::vector<float> values(mean.data(), mean.data() + mean.size());
    a.insert("head_mean.layer" + std::to_string(l), Tensor({tokens, w}, std::move(values)));
  }
  a.metadata()["count"] = std::to_string(count_);
  a.metadata()["mode"] = std::string(to_string(mode_));
  a.metadata()["fingerprint"] = fingerprint_;
  return a;
}

HeadMeanStore HeadMeanStore::from_archive(const TensorArchive& archive, const ViTConfig& config) {
  const auto& meta = archive.metadata();
  for (const char* key : {"count", "mode", "fingerprint"})
    if (!meta.contains(key)) throw DataError(std::string("head-mean archive lacks metadata '") + key + "'");
  HeadMeanStore store(config, parse_mean_mode(meta.at("mode")));
  store.fingerprint_ = meta.at("fingerprint");
  store.count_ = std::stoull(meta.at("count"));
  if (store.count_ == 0) throw DataError("head-mean archive has a zero count");
  const std::vector<std::int64_t> shape = {config.n_tokens(), config.width};
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string name = "head_mean.layer" + std::to_string(l);
    const Tensor& t = archive.at(name);
    if (t.shape != shape)
      throw DataError("shape mismatch for tensor '" + name + "': expected " + shape_string(shape) + ", found " +
                      shape_string(t.shape));
    const Eigen::Map<const MatrixF> mean(t.values.data(), config.n_tokens(), config.width);
    store.sums_[static_cast<std::size_t>(l)] = mean.cast<double>() * static_cast<double>(store.count_);
  }
  return store;
}

HeadMeanStore compute_head_means(const ViTModel& model, std::span<const Image> images, MeanMode mode,
                                 const std::string& fingerprint, int jobs) {
  if (images.empty()) throw DataError("cannot compute head means over an empty dataset");
  // Each image lands in a fixed shard so that the merged sums depend neither
  // on thread scheduling nor on the number of workers.
  constexpr std::size_t kShards = 8;
  const std::size_t shards = std::min(images.size(), kShards);
  std::vector<HeadMeanStore> partial(shards, HeadMeanStore(model.config(), mode));
  ForwardOptions opts;
  opts.capture.head_outputs = true;
  parallel_for(shards, jobs, [&](std::size_t s) {
    for (std::size_t i = s; i < images.size(); i += shards) partial[s].accumulate(model.forward(images[i], opts));
  });
  HeadMeanStore out = std::move(partial[0]);
  for (std::size_t s = 1; s < shards; ++s) out.merge(partial[s]);
  out.set_fingerprint(fingerprint);
  return out;
}

}  // namespace gestalt
