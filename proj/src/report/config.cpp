#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "gestalt/error.hpp"
#include "gestalt/pipeline.hpp"

namespace gestalt {

namespace {

// Reads the keys of one YAML map and rejects the ones nobody asked for.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_ + ": expected a mapping");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(where(key) + ": cannot read value '" + YAML::Dump(node_[key]) + "'");
    }
  }

  YAML::Node node(const std::string& key) {
    used_.insert(key);
    return node_ && node_.IsMap() ? node_[key] : YAML::Node();
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.contains(key)) throw ConfigError("unknown config key '" + where(key) + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

std::vector<int> int_list(Section& s, const std::string& key, std::vector<int> fallback) {
  return s.get<std::vector<int>>(key, std::move(fallback));
}

template <typename Fn>
auto wrap(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

ModelSpec parse_model(Section s, const std::filesystem::path& base, int patch_size) {
  ModelSpec m;
  m.name = s.get<std::string>("name", m.name);
  m.archive = resolve(base, s.get<std::string>("archive", ""));
  m.config_file = resolve(base, s.get<std::string>("config", ""));
  m.untrained_seed = s.get<std::uint64_t>("untrained_seed", 0);
  m.readout = wrap("model.readout", [&] { return parse_readout_mode(s.get<std::string>("readout", "residual")); });

  std::string kv;
  if (s.has("vit")) {
    const auto vit = s.node("vit");
    if (!vit.IsMap()) throw ConfigError("model.vit: expected a mapping");
    for (const auto& e : vit) {
      const auto key = e.first.as<std::string>();
      std::string value;
      if (e.second.IsSequence()) {
        for (std::size_t i = 0; i < e.second.size(); ++i) value += (i ? ", " : "") + e.second[i].as<std::string>();
      } else {
        value = e.second.as<std::string>();
      }
      kv += key + " = " + value + "\n";
    }
  }
  if (!m.config_file.empty() && !kv.empty()) throw ConfigError("model: give either 'config' or 'vit', not both");
  if (!m.config_file.empty()) {
    m.vit = load_vit_config(m.config_file);
  } else {
    if (kv.find("patch_size") == std::string::npos) kv += "patch_size = " + std::to_string(patch_size) + "\n";
    m.vit = wrap("model.vit", [&] { return parse_vit_config(kv); });
  }
  if (!m.archive.empty() && m.config_file.empty())
    throw ConfigError("model: an archive needs its key-value 'config' file");
  s.finish();
  return m;
}

ShapeDatasetSpec parse_shape(Section s) {
  ShapeDatasetSpec d;
  d.name = s.get<std::string>("name", "");
  const auto kind = s.get<std::string>("kind", "blob");
  if (kind == "blob") d.kind = StimulusKind::blob;
  else if (kind == "curve") d.kind = StimulusKind::curve;
  else throw ConfigError(s.where("kind") + ": expected blob or curve, got '" + kind + "'");
  if (d.name.empty()) d.name = kind == "blob" ? "blobs" : "curves";
  d.count = s.get<int>("count", d.count);
  if (s.has("seed")) d.seed = s.get<std::uint64_t>("seed", 0);
  d.blob.radius = s.get<double>("radius", d.blob.radius);
  d.blob.complexity = s.get<int>("complexity", d.blob.complexity);
  d.curve.n_points = s.get<int>("n_points", d.curve.n_points);
  d.curve.thickness = s.get<double>("thickness", d.curve.thickness);
  s.finish();
  return d;
}

BindingDatasetSpec parse_binding(Section s) {
  BindingDatasetSpec b;
  b.name = s.get<std::string>("name", b.name);
  b.count = s.get<int>("count", b.count);
  if (s.has("seed")) b.seed = s.get<std::uint64_t>("seed", 0);
  const auto shape = s.get<std::string>("shape", "blob");
  if (shape == "blob") b.params.shape = ShapeKind::blob;
  else if (shape == "curve") b.params.shape = ShapeKind::curve;
  else throw ConfigError(s.where("shape") + ": expected blob or curve, got '" + shape + "'");
  b.params.gap_min = s.get<double>("gap_min", b.params.gap_min);
  b.params.gap_max = s.get<double>("gap_max", b.params.gap_max);
  b.test_fraction = s.get<double>("test_fraction", b.test_fraction);
  b.pairs.max_pairs = s.get<int>("max_pairs", b.pairs.max_pairs);
  b.pairs.balance = s.get<bool>("balance", b.pairs.balance);
  b.pairs.locality = wrap(s.where("locality"), [&] { return parse_pair_locality(s.get<std::string>("locality", "any")); });
  s.finish();
  return b;
}

std::vector<int> default_ts() {
  std::vector<int> ts;
  for (int t = -16; t <= 16; t += 2) ts.push_back(t);
  return ts;
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view yaml, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  PipelineConfig c;
  c.base_dir = base_dir;
  Section top(root, "");
  c.seed = top.get<std::uint64_t>("seed", c.seed);
  c.output = resolve(base_dir, top.get<std::string>("output", c.output.string()));
  c.jobs = top.get<int>("jobs", c.jobs);
  c.patch_size = top.get<int>("patch_size", c.patch_size);

  c.model = parse_model(Section(top.node("model"), "model"), base_dir, c.patch_size);

  Section datasets(top.node("datasets"), "datasets");
  if (datasets.has("shapes")) {
    const auto list = datasets.node("shapes");
    if (!list.IsSequence()) throw ConfigError("datasets.shapes: expected a list");
    for (std::size_t i = 0; i < list.size(); ++i)
      c.shapes.push_back(parse_shape(Section(list[i], "datasets.shapes[" + std::to_string(i) + "]")));
  } else {
    ShapeDatasetSpec blobs;
    blobs.name = "blobs";
    ShapeDatasetSpec curves;
    curves.name = "curves";
    curves.kind = StimulusKind::curve;
    c.shapes = {blobs, curves};
  }
  c.binding = parse_binding(Section(datasets.node("binding"), "datasets.binding"));
  datasets.finish();

  Section probe(top.node("probe"), "probe");
  c.probe.epochs = probe.get<int>("epochs", c.probe.epochs);
  c.probe.learning_rate = probe.get<double>("learning_rate", c.probe.learning_rate);
  c.probe.weight_decay = probe.get<double>("weight_decay", c.probe.weight_decay);
  c.probe.gamma = probe.get<double>("gamma", c.probe.gamma);
  c.probe.milestones = int_list(probe, "milestones", c.probe.milestones);
  c.probe.batch_size = probe.get<int>("batch_size", c.probe.batch_size);
  c.probe_layers = int_list(probe, "layers", {});
  probe.finish();

  Section traj(top.node("trajectory"), "trajectory");
  c.trajectory.ts = int_list(traj, "ts", default_ts());
  auto& opt = c.trajectory.options;
  opt.axis = wrap("trajectory.axis", [&] { return parse_trajectory_axis(traj.get<std::string>("axis", "x")); });
  opt.aggregation =
      wrap("trajectory.aggregation", [&] { return parse_aggregation(traj.get<std::string>("aggregation", "per_patch")); });
  const auto control = traj.get<std::string>("control", "random_rotation");
  if (control == "random_rotation") opt.control = ControlMode::random_rotation;
  else if (control == "max_over_rotations") opt.control = ControlMode::max_over_rotations;
  else throw ConfigError("trajectory.control: expected random_rotation or max_over_rotations, got '" + control + "'");
  opt.max_targets = traj.get<int>("max_targets", opt.max_targets);
  traj.finish();

  Section abl(top.node("ablation"), "ablation");
  c.ablation.k = abl.get<int>("k", c.ablation.k);
  c.ablation.n_controls = abl.get<int>("n_controls", c.ablation.n_controls);
  c.ablation.mean_mode =
      wrap("ablation.mean_mode", [&] { return parse_mean_mode(abl.get<std::string>("mean_mode", "positional")); });
  c.ablation.layers = int_list(abl, "layers", {});
  c.ablation.score_dataset = abl.get<std::string>("score_dataset", c.shapes.empty() ? "" : c.shapes.front().name);
  abl.finish();

  top.finish();
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str(), path.parent_path());
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (jobs < 1) fail("jobs must be >= 1");
  if (patch_size <= 0 || kCanvasSize % patch_size != 0)
    fail("patch_size " + std::to_string(patch_size) + " must divide the " + std::to_string(kCanvasSize) + " px canvas");
  model.vit.validate();
  if (model.vit.patch_size != patch_size)
    fail("patch_size " + std::to_string(patch_size) + " does not match the model's patch size " +
         std::to_string(model.vit.patch_size));
  if (model.vit.image_size != kCanvasSize)
    fail("model image_size must be " + std::to_string(kCanvasSize));
  if (shapes.empty()) fail("datasets.shapes must list at least one dataset");
  std::set<std::string> names{binding.name};
  for (const auto& s : shapes) {
    if (s.count < 1) fail("datasets." + s.name + ".count must be >= 1");
    if (!names.insert(s.name).second) fail("dataset name '" + s.name + "' used twice");
  }
  if (binding.count < 1) fail("datasets.binding.count must be >= 1");
  if (!(binding.test_fraction > 0.0 && binding.test_fraction < 1.0)) fail("datasets.binding.test_fraction must be in (0, 1)");
  const int n_test = static_cast<int>(binding.count * binding.test_fraction + 0.5);
  if (n_test < 1 || n_test >= binding.count) fail("datasets.binding: both the train and test split need >= 1 stimulus");
  if (binding.pairs.max_pairs < 0) fail("datasets.binding.max_pairs must be >= 0");
  probe.validate();
  auto check_layers = [&](const std::vector<int>& layers, const std::string& key) {
    for (int l : layers)
      if (l < 0 || l >= model.vit.n_layers) fail(key + ": layer " + std::to_string(l) + " out of range");
  };
  check_layers(probe_layers, "probe.layers");
  check_layers(ablation.layers, "ablation.layers");
  for (int l : resolved_ablation_layers()) {
    const auto p = resolved_probe_layers();
    if (std::find(p.begin(), p.end(), l) == p.end()) fail("ablation.layers: layer " + std::to_string(l) + " is not probed");
  }
  if (std::find(trajectory.ts.begin(), trajectory.ts.end(), 0) == trajectory.ts.end()) fail("trajectory.ts must contain 0");
  if (trajectory.options.max_targets < 0) fail("trajectory.max_targets must be >= 0");
  if (ablation.k < 0) fail("ablation.k must be >= 0");
  for (int l : resolved_ablation_layers())
    if (ablation.k > (l + 1) * model.vit.n_heads)
      fail("ablation.k = " + std::to_string(ablation.k) + " exceeds the heads available up to layer " + std::to_string(l));
  if (ablation.n_controls < 1) fail("ablation.n_controls must be >= 1");
  bool found = false;
  for (const auto& s : shapes) found = found || s.name == ablation.score_dataset;
  if (!found) fail("ablation.score_dataset '" + ablation.score_dataset + "' is not a shape dataset");
}

std::vector<int> PipelineConfig::resolved_probe_layers() const {
  if (!probe_layers.empty()) return probe_layers;
  std::vector<int> all(model.vit.n_layers);
  for (int i = 0; i < model.vit.n_layers; ++i) all[i] = i;
  return all;
}

std::vector<int> PipelineConfig::resolved_ablation_layers() const {
  return ablation.layers.empty() ? resolved_probe_layers() : ablation.layers;
}

nlohmann::json PipelineConfig::snapshot() const {
  using nlohmann::json;
  json shapes_json = json::array();
  for (const auto& s : shapes) {
    shapes_json.push_back({{"name", s.name},
                           {"kind", std::string(to_string(s.kind))},
                           {"count", s.count},
                           {"seed", s.seed ? json(*s.seed) : json(nullptr)},
                           {"radius", s.blob.radius},
                           {"complexity", s.blob.complexity},
                           {"n_points", s.curve.n_points},
                           {"thickness", s.curve.thickness}});
  }
  const auto& o = trajectory.options;
  return {
      {"seed", seed},
      {"jobs", jobs},
      {"patch_size", patch_size},
      {"model",
       {{"name", model.name},
        {"archive", model.archive.string()},
        {"config", model.config_file.string()},
        {"untrained_seed", model.untrained_seed},
        {"vit", format_vit_config(model.vit)},
        {"readout", std::string(to_string(model.readout))}}},
      {"datasets",
       {{"shapes", shapes_json},
        {"binding",
         {{"name", binding.name},
          {"count", binding.count},
          {"seed", binding.seed ? json(*binding.seed) : json(nullptr)},
          {"shape", std::string(to_string(binding.params.shape))},
          {"gap_min", binding.params.gap_min},
          {"gap_max", binding.params.gap_max},
          {"test_fraction", binding.test_fraction},
          {"max_pairs", binding.pairs.max_pairs},
          {"balance", binding.pairs.balance},
          {"locality", std::string(to_string(binding.pairs.locality))}}}}},
      {"probe",
       {{"epochs", probe.epochs},
        {"learning_rate", probe.learning_rate},
        {"weight_decay", probe.weight_decay},
        {"gamma", probe.gamma},
        {"milestones", probe.milestones},
        {"batch_size", probe.batch_size},
        {"layers", resolved_probe_layers()}}},
      {"trajectory",
       {{"ts", trajectory.ts},
        {"axis", std::string(to_string(o.axis))},
        {"aggregation", std::string(to_string(o.aggregation))},
        {"control", o.control == ControlMode::random_rotation ? "random_rotation" : "max_over_rotations"},
        {"max_targets", o.max_targets}}},
      {"ablation",
       {{"k", ablation.k},
        {"n_controls", ablation.n_controls},
        {"mean_mode", std::string(to_string(ablation.mean_mode))},
        {"layers", resolved_ablation_layers()},
        {"score_dataset", ablation.score_dataset}}},
  };
}

}  // namespace gestalt
