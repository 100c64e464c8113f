#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "gestalt/ablation.hpp"
#include "gestalt/error.hpp"
#include "gestalt/parallel.hpp"
#include "gestalt/random.hpp"

namespace gestalt {

std::string_view to_string(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::object: return "object";
    case DatasetVariant::scrambled_orientation: return "scrambled_orientation";
    case DatasetVariant::scrambled_location: return "scrambled_location";
  }
  return "object";
}

DatasetVariant parse_dataset_variant(std::string_view text) {
  if (text == "object") return DatasetVariant::object;
  if (text == "scrambled_orientation") return DatasetVariant::scrambled_orientation;
  if (text == "scrambled_location") return DatasetVariant::scrambled_location;
  throw ConfigError("unknown dataset variant '" + std::string(text) + "'");
}

std::vector<HeadId> select_top_heads(const Eigen::MatrixXd& scores, int k, int up_to_layer) {
  if (k < 0) throw ConfigError("k must be non-negative");
  if (up_to_layer < 0) throw ConfigError("up_to_layer must be non-negative");
  const int layers = std::min<int>(static_cast<int>(scores.rows()), up_to_layer + 1);
  std::vector<HeadId> candidates;
  for (int l = 0; l < layers; ++l)
    for (int h = 0; h < scores.cols(); ++h) candidates.push_back({l, h});
  if (static_cast<std::size_t>(k) > candidates.size())
    throw ConfigError("only " + std::to_string(candidates.size()) + " heads in layers <= " +
                      std::to_string(up_to_layer) + ", cannot select " + std::to_string(k));
  std::stable_sort(candidates.begin(), candidates.end(), [&](const HeadId& a, const HeadId& b) {
    return scores(a.layer, a.head) > scores(b.layer, b.head);
  });
  candidates.resize(static_cast<std::size_t>(k));
  return candidates;
}

std::vector<std::vector<HeadId>> random_control_sets(std::span<const HeadId> reference, int n_layers, int n_heads,
                                                     int n, std::uint64_t seed) {
  if (reference.empty()) throw ConfigError("control sets need a nonempty reference set");
  if (n < 0) throw ConfigError("control set count must be non-negative");
  std::map<int, int> per_layer;
  for (const HeadId& h : reference) {
    if (h.layer < 0 || h.layer >= n_layers || h.head < 0 || h.head >= n_heads)
      throw ConfigError("reference head out of range");
    ++per_layer[h.layer];
  }
  bool forced = true;
  for (const auto& [layer, count] : per_layer) {
    if (count > n_heads)
      throw ConfigError("layer " + std::to_string(layer) + " lacks enough heads to resample");
    forced = forced && count == n_heads;
  }
  std::vector<HeadId> sorted_ref(reference.begin(), reference.end());
  std::sort(sorted_ref.begin(), sorted_ref.end());

  std::vector<std::vector<HeadId>> out;
  std::vector<int> pool(static_cast<std::size_t>(n_heads));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "control-set", static_cast<std::uint64_t>(i)));
    std::vector<HeadId> set;
    do {
      set.clear();
      for (const auto& [layer, count] : per_layer) {
        std::iota(pool.begin(), pool.end(), 0);
        std::shuffle(pool.begin(), pool.end(), rng.engine());
        for (int c = 0; c < count; ++c) set.push_back({layer, pool[static_cast<std::size_t>(c)]});
      }
      std::sort(set.begin(), set.end());
    } while (!forced && set == sorted_ref);
    out.push_back(std::move(set));
  }
  return out;
}

PairSet collect_pairs(const ViTModel& model, std::span<const PairedStimulus> data, int layer, ReadoutMode readout,
                      const HeadAblationSpec* ablation, int jobs) {
  const ViTConfig& cfg = model.config();
  if (layer < 0 || layer >= cfg.n_layers) throw ConfigError("probe layer out of range");
  std::vector<MatrixF> rows(data.size());
  ForwardOptions fo;
  fo.capture.activations = true;
  fo.ablation = ablation;
  fo.last_layer = layer;
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    const ForwardResult r = model.forward(data[i].image, fo);
    const MatrixF all = model.patch_readout(r, layer, readout);
    MatrixF picked(static_cast<Eigen::Index>(data[i].patches.size()), all.cols());
    for (std::size_t k = 0; k < data[i].patches.size(); ++k) {
      const int p = data[i].patches[k];
      if (p < 0 || p >= all.rows()) throw DataError("stimulus " + data[i].id + ": patch index out of range");
      picked.row(static_cast<Eigen::Index>(k)) = all.row(p);
    }
    rows[i] = std::move(picked);
  });
  PairSet set(cfg.width, layer);
  for (std::size_t i = 0; i < data.size(); ++i) set.add(data[i].id, rows[i], data[i].patches, data[i].pairs);
  return set;
}

AblationRun run_ablation(const ProbeParams& probe, const AblationContext& ctx, int layer,
                         std::span<const HeadId> heads, std::span<const PairedStimulus> data, DatasetVariant variant,
                         std::optional<double> baseline) {
  if (ctx.model == nullptr) throw ConfigError("ablation needs a model");
  for (const HeadId& h : heads)
    if (h.layer > layer)
      throw ConfigError("head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                        ") lies beyond the probed layer " + std::to_string(layer));
  AblationRun run;
  run.layer = layer;
  run.heads.assign(heads.begin(), heads.end());
  run.variant = variant;
  run.baseline = baseline ? *baseline
                          : eval_probe(probe, collect_pairs(*ctx.model, data, layer, ctx.readout, nullptr, ctx.jobs))
                                .accuracy;
  if (heads.empty()) {
    run.ablated = run.baseline;
  } else {
    if (ctx.means == nullptr) throw ConfigError("ablation needs a HeadMeanStore");
    HeadAblationSpec spec{run.heads, ctx.means};
    run.ablated = eval_probe(probe, collect_pairs(*ctx.model, data, layer, ctx.readout, &spec, ctx.jobs)).accuracy;
  }
  run.delta = run.baseline - run.ablated;
  return run;
}

double quantile_type7(std::span<const double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Quartiles quartiles(std::span<const double> values) {
  return {quantile_type7(values, 0.25), quantile_type7(values, 0.5), quantile_type7(values, 0.75)};
}

SelectivityReport selectivity_report(std::span<const AblationRun> runs) {
  // (layer, control_set, variant) -> delta
  std::map<std::tuple<int, int, DatasetVariant>, double> delta;
  std::set<int> layers;
  std::set<int> controls;
  std::set<DatasetVariant> scrambled;
  for (const AblationRun& r : runs) {
    if (!delta.emplace(std::tuple{r.layer, r.control_set, r.variant}, r.delta).second)
      throw DataError("duplicate ablation run for layer " + std::to_string(r.layer));
    layers.insert(r.layer);
    if (r.control_set >= 0) controls.insert(r.control_set);
    if (r.variant != DatasetVariant::object) scrambled.insert(r.variant);
  }
  if (scrambled.empty()) throw DataError("selectivity needs at least one scrambled variant");

  auto get = [&](int layer, int set, DatasetVariant v) {
    const auto it = delta.find({layer, set, v});
    if (it == delta.end())
      throw DataError("missing " + std::string(to_string(v)) + " run for layer " + std::to_string(layer) +
                      (set >= 0 ? ", control set " + std::to_string(set) : std::string()));
    return it->second;
  };

  SelectivityReport report;
  for (int layer : layers) {
    SelectivityRecord rec;
    rec.layer = layer;
    rec.delta_object = get(layer, -1, DatasetVariant::object);
    for (DatasetVariant v : scrambled) {
      rec.delta_scrambled[v] = get(layer, -1, v);
      rec.selectivity[v] = rec.delta_object - rec.delta_scrambled[v];
      std::vector<double> cs;
      for (int c : controls) cs.push_back(get(layer, c, DatasetVariant::object) - get(layer, c, v));
      if (!cs.empty()) {
        rec.control_quartiles[v] = quartiles(cs);
        rec.flagged[v] = rec.selectivity[v] > rec.control_quartiles[v].q3;
      } else {
        rec.flagged[v] = false;
      }
      rec.control_selectivity[v] = std::move(cs);
    }
    report.layers.push_back(std::move(rec));
  }
  for (DatasetVariant v : scrambled) {
    int best = report.layers.front().layer;
    double best_value = report.layers.front().selectivity.at(v);
    for (const auto& rec : report.layers) {
      if (rec.selectivity.at(v) > best_value) {
        best_value = rec.selectivity.at(v);
        best = rec.layer;
      }
    }
    report.best_layer[v] = best;
  }
  return report;
}

}  // namespace gestalt
