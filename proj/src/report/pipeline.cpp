#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gestalt/error.hpp"
#include "gestalt/hash.hpp"
#include "gestalt/manifest.hpp"
#include "gestalt/parallel.hpp"
#include "gestalt/pipeline.hpp"
#include "gestalt/png_io.hpp"
#include "gestalt/random.hpp"
#include "gestalt/svg.hpp"

#ifndef GESTALT_VERSION
#define GESTALT_VERSION "0.0.0"
#endif

namespace gestalt {

namespace fs = std::filesystem;

std::string_view tool_version() { return GESTALT_VERSION; }

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::generate: return "generate";
    case Stage::activations: return "activations";
    case Stage::probe: return "probe";
    case Stage::continuity: return "continuity";
    case Stage::ablate: return "ablate";
    case Stage::report: return "report";
  }
  return "?";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::generate, Stage::activations, Stage::probe,
                                            Stage::continuity, Stage::ablate, Stage::report};
  return stages;
}

namespace {

constexpr std::array<DatasetVariant, 3> kVariants = {DatasetVariant::object, DatasetVariant::scrambled_orientation,
                                                     DatasetVariant::scrambled_location};

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> upstream(Stage s) {
  switch (s) {
    case Stage::generate: return {};
    case Stage::activations: return {"generate"};
    case Stage::probe: return {"activations"};
    case Stage::continuity: return {"generate"};
    case Stage::ablate: return {"generate", "activations", "probe", "continuity"};
    case Stage::report: return {"probe", "continuity", "ablate"};
  }
  return {};
}

std::string head_label(HeadId h) { return fmt::format("L{}H{}", h.layer, h.head); }

std::string head_list(std::span<const HeadId> heads) {
  std::string out;
  for (const auto& h : heads) out += (out.empty() ? "" : ";") + fmt::format("L{}H{}", h.layer, h.head);
  return out;
}

std::string layer_key(int layer) { return fmt::format("layer{:02d}", layer); }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

Tensor tensor_of(const MatrixF& m) {
  return Tensor({m.rows(), m.cols()}, std::vector<float>(m.data(), m.data() + m.size()));
}

MatrixF matrix_of(const Tensor& t) {
  if (t.shape.size() != 2) throw DataError("expected a matrix, got shape " + shape_string(t.shape));
  return Eigen::Map<const MatrixF>(t.values.data(), t.shape[0], t.shape[1]);
}

std::uint64_t dataset_seed(std::optional<std::uint64_t> explicit_seed, std::uint64_t root, const std::string& name) {
  return explicit_seed ? *explicit_seed : derive_seed(root, "dataset:" + name);
}

double parse_number(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw DataError("not a number in table: '" + s + "'");
  }
}

struct BindingItem {
  ManifestRecord record;
  bool train = false;
};

}  // namespace

Pipeline::Pipeline(PipelineConfig config)
    : config_(std::move(config)), manifest_(RunManifest::load_or_new(config_.output)) {
  config_.validate();
}

const ViTModel& Pipeline::model() {
  if (!model_) {
    const auto& m = config_.model;
    if (m.archive.empty()) {
      spdlog::info("model: untrained, seed {}", m.untrained_seed);
      model_ = ViTModel::init_untrained(m.untrained_seed, m.vit);
    } else {
      spdlog::info("model: {}", m.archive.string());
      model_ = ViTModel::load(m.archive, m.vit);
    }
  }
  return *model_;
}

std::string Pipeline::input_hash(Stage stage) const {
  nlohmann::json snap = config_.snapshot();
  snap.erase("jobs");
  std::string model_hash;
  if (!config_.model.archive.empty() && fs::exists(config_.model.archive)) model_hash = sha256_file(config_.model.archive);
  const nlohmann::json j = {{"stage", std::string(to_string(stage))},
                            {"tool_version", std::string(tool_version())},
                            {"config", snap},
                            {"model", model_hash},
                            {"upstream", manifest_.outputs_hash(upstream(stage))}};
  return sha256_hex(j.dump());
}

StageOutcome Pipeline::run(Stage stage, bool force) {
  const std::string name(to_string(stage));
  for (const auto& up : upstream(stage)) {
    const auto it = manifest_.stages().find(up);
    if (stage != Stage::report && (it == manifest_.stages().end() || it->second.status != "complete"))
      throw DataError("stage '" + name + "' needs a completed '" + up + "' stage in " + out().string());
  }
  const std::string hash = input_hash(stage);
  if (!force && manifest_.up_to_date(name, hash)) {
    spdlog::info("{}: inputs unchanged, skipping", name);
    StageOutcome o{stage, true, {}};
    for (const auto& [rel, digest] : manifest_.stages().at(name).outputs) o.outputs.push_back(rel);
    return o;
  }
  auto& rec = manifest_.stages()[name];
  rec = StageRecord{"incomplete", hash, now_utc(), "", {}};
  manifest_.config() = config_.snapshot();
  manifest_.save();

  spdlog::info("{}: running", name);
  std::vector<std::string> outputs;
  switch (stage) {
    case Stage::generate: outputs = generate(); break;
    case Stage::activations: outputs = activations(); break;
    case Stage::probe: outputs = probe(); break;
    case Stage::continuity: outputs = continuity(); break;
    case Stage::ablate: outputs = ablate(); break;
    case Stage::report: outputs = report(); break;
  }
  std::sort(outputs.begin(), outputs.end());
  auto& done = manifest_.stages()[name];
  for (const auto& rel : outputs) done.outputs[rel] = sha256_file(out() / rel);
  done.status = "complete";
  done.finished = now_utc();
  manifest_.save();
  spdlog::info("{}: {} files", name, outputs.size());
  return {stage, false, outputs};
}

std::vector<StageOutcome> Pipeline::run_all(bool force) {
  std::vector<StageOutcome> out;
  for (Stage s : all_stages()) out.push_back(run(s, force));
  return out;
}

// ---------------------------------------------------------------------------
// generate

std::vector<std::string> Pipeline::generate() {
  std::vector<std::string> outputs;
  const int patch = config_.patch_size;

  for (const auto& spec : config_.shapes) {
    const fs::path dir = out() / "data" / spec.name;
    fs::remove_all(dir);
    const std::uint64_t root = dataset_seed(spec.seed, config_.seed, spec.name);
    std::vector<ManifestRecord> records(static_cast<std::size_t>(spec.count));
    parallel_for(records.size(), config_.jobs, [&](std::size_t i) {
      const std::uint64_t seed = derive_seed(root, "stimulus", i);
      const Stimulus s = spec.kind == StimulusKind::blob ? gen_blob(seed, spec.blob) : gen_curve(seed, spec.curve);
      records[i] = save_stimulus(s, dir, fmt::format("{}-{:05d}", spec.name, i), spec.name, "object", patch);
    });
    write_manifest(dir / "manifest.jsonl", records);
    for (const auto& r : records) {
      outputs.push_back(fmt::format("data/{}/{}", spec.name, r.image));
      for (const auto& m : r.masks) outputs.push_back(fmt::format("data/{}/{}", spec.name, m));
    }
    outputs.push_back(fmt::format("data/{}/manifest.jsonl", spec.name));
  }

  const auto& b = config_.binding;
  const fs::path dir = out() / "data" / b.name;
  fs::remove_all(dir);
  const std::uint64_t root = dataset_seed(b.seed, config_.seed, b.name);
  const int n_train = b.count - static_cast<int>(b.count * b.test_fraction + 0.5);
  std::vector<ManifestRecord> records(static_cast<std::size_t>(b.count) * kVariants.size());
  parallel_for(static_cast<std::size_t>(b.count), config_.jobs, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(root, "stimulus", i);
    Stimulus base = gen_binding_pair(seed, b.params);
    if (const auto bad = check_binding_pair(base, b.params.gap_min, b.params.gap_max))
      throw GenerationError(fmt::format("binding stimulus {} fails its invariant: {}", i, *bad));
    const char* split = static_cast<int>(i) < n_train ? "train" : "test";
    for (std::size_t v = 0; v < kVariants.size(); ++v) {
      Stimulus s = kVariants[v] == DatasetVariant::object ? base
                   : kVariants[v] == DatasetVariant::scrambled_orientation
                       ? scramble_orientation(base, patch, derive_seed(seed, "scramble_orientation"))
                       : scramble_location(base, patch, derive_seed(seed, "scramble_location"));
      s.params["split"] = split;
      const std::string variant(to_string(kVariants[v]));
      records[i * kVariants.size() + v] =
          save_stimulus(s, dir, fmt::format("{}-{:05d}-{}", b.name, i, variant), b.name, variant, patch);
    }
  });
  write_manifest(dir / "manifest.jsonl", records);
  for (const auto& r : records) {
    outputs.push_back(fmt::format("data/{}/{}", b.name, r.image));
    for (const auto& m : r.masks) outputs.push_back(fmt::format("data/{}/{}", b.name, m));
  }
  outputs.push_back(fmt::format("data/{}/manifest.jsonl", b.name));
  return outputs;
}

// ---------------------------------------------------------------------------
// activations

namespace {

std::vector<BindingItem> binding_items(const fs::path& out, const std::string& name, DatasetVariant variant) {
  std::vector<BindingItem> items;
  for (auto& r : read_manifest(out / "data" / name / "manifest.jsonl")) {
    if (r.variant != to_string(variant)) continue;
    const bool train = r.params.value("split", "") == "train";
    items.push_back({std::move(r), train});
  }
  if (items.empty()) throw DataError("no " + std::string(to_string(variant)) + " stimuli in dataset " + name);
  return items;
}

fs::path activation_path(const fs::path& out, DatasetVariant variant, const std::string& id) {
  return out / "activations" / std::string(to_string(variant)) / (id + ".safetensors");
}

struct Dump {
  std::vector<int> patches;
  std::vector<PatchPair> pairs;
};

Dump read_dump_index(const TensorArchive& a, const std::string& id) {
  Dump d;
  for (float v : a.at(id + ".patches").values) d.patches.push_back(static_cast<int>(v));
  const Tensor& p = a.at(id + ".pairs");
  for (std::size_t i = 0; i + 2 < p.values.size(); i += 3)
    d.pairs.push_back({static_cast<int>(p.values[i]), static_cast<int>(p.values[i + 1]), p.values[i + 2] != 0.0f});
  return d;
}

}  // namespace

std::vector<std::string> Pipeline::activations() {
  const ViTModel& vit = model();
  const auto layers = config_.resolved_probe_layers();
  const int last = *std::max_element(layers.begin(), layers.end());
  const auto& b = config_.binding;
  fs::remove_all(out() / "activations");

  std::vector<std::string> outputs;
  CsvWriter skipped({"variant", "id", "reason"});
  for (DatasetVariant variant : kVariants) {
    const auto items = binding_items(out(), b.name, variant);
    std::vector<std::optional<std::string>> skip(items.size());
    parallel_for(items.size(), config_.jobs, [&](std::size_t i) {
      const auto& r = items[i].record;
      const PairSampling sampling =
          sample_pairs(r.grid, derive_seed(r.seed, "pairs:" + r.variant), b.pairs);
      skip[i] = sampling.skipped;
      std::set<int> needed;
      for (const auto& p : sampling.pairs) {
        needed.insert(p.a);
        needed.insert(p.b);
      }
      const std::vector<int> patches(needed.begin(), needed.end());

      TensorArchive a;
      std::vector<float> idx(patches.begin(), patches.end());
      a.insert(r.id + ".patches", Tensor({static_cast<std::int64_t>(idx.size())}, idx));
      std::vector<float> pairs;
      for (const auto& p : sampling.pairs) {
        pairs.push_back(static_cast<float>(p.a));
        pairs.push_back(static_cast<float>(p.b));
        pairs.push_back(p.same ? 1.0f : 0.0f);
      }
      a.insert(r.id + ".pairs", Tensor({static_cast<std::int64_t>(sampling.pairs.size()), 3}, pairs));
      if (!patches.empty()) {
        const Image image = read_png_rgb(out() / "data" / b.name / r.image);
        ForwardOptions opts;
        opts.capture.activations = true;
        opts.last_layer = last;
        const ForwardResult res = vit.forward(image, opts);
        for (int layer : layers) {
          const MatrixF all = vit.patch_readout(res, layer, config_.model.readout);
          MatrixF sel(static_cast<Eigen::Index>(patches.size()), all.cols());
          for (std::size_t k = 0; k < patches.size(); ++k) sel.row(static_cast<Eigen::Index>(k)) = all.row(patches[k]);
          a.insert(r.id + "." + layer_key(layer), tensor_of(sel));
        }
      }
      a.metadata()["id"] = r.id;
      a.metadata()["readout"] = std::string(to_string(config_.model.readout));
      const fs::path path = activation_path(out(), variant, r.id);
      fs::create_directories(path.parent_path());
      a.save(path);
    });
    for (std::size_t i = 0; i < items.size(); ++i) {
      outputs.push_back(fs::relative(activation_path(out(), variant, items[i].record.id), out()).generic_string());
      if (skip[i]) skipped.row({std::string(to_string(variant)), items[i].record.id, *skip[i]});
    }
  }
  skipped.save(out() / "tables" / "skipped_stimuli.csv");
  outputs.push_back("tables/skipped_stimuli.csv");
  return outputs;
}

// ---------------------------------------------------------------------------
// probe

std::vector<std::string> Pipeline::probe() {
  const auto layers = config_.resolved_probe_layers();
  const auto& b = config_.binding;
  const int width = config_.model.vit.width;
  fs::remove_all(out() / "probes");

  std::vector<std::string> outputs;
  CsvWriter table({"model", "dataset", "variant", "layer", "n_train", "n_test", "train_accuracy", "test_accuracy",
                   "test_accuracy_same", "test_accuracy_different"});
  std::map<DatasetVariant, std::vector<double>> curves;
  std::map<DatasetVariant, ProbeEval> last_eval;

  for (DatasetVariant variant : kVariants) {
    const auto items = binding_items(out(), b.name, variant);
    std::vector<TensorArchive> dumps(items.size());
    parallel_for(items.size(), config_.jobs,
                 [&](std::size_t i) { dumps[i] = TensorArchive::load(activation_path(out(), variant, items[i].record.id)); });

    for (int layer : layers) {
      PairSet train(width, layer), test(width, layer);
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& id = items[i].record.id;
        const Dump d = read_dump_index(dumps[i], id);
        if (d.pairs.empty()) continue;
        const MatrixF rows = matrix_of(dumps[i].at(id + "." + layer_key(layer)));
        (items[i].train ? train : test).add(id, rows, d.patches, d.pairs);
      }
      if (train.empty() || test.empty())
        throw DataError(fmt::format("{} {}: no probe pairs in the train or test split", b.name, to_string(variant)));
      TrainConfig tc = config_.probe;
      tc.seed = derive_seed(config_.seed, "probe:" + std::string(to_string(variant)), static_cast<std::uint64_t>(layer));
      const TrainResult trained = train_probe(train, tc);
      const ProbeEval tr = eval_probe(trained.params, train);
      const ProbeEval te = eval_probe(trained.params, test);
      const std::string rel = fmt::format("probes/{}/{}.safetensors", to_string(variant), layer_key(layer));
      fs::create_directories((out() / rel).parent_path());
      save_probe(out() / rel, trained.params,
                 {{"layer", std::to_string(layer)}, {"variant", std::string(to_string(variant))}, {"model", config_.model.name}});
      outputs.push_back(rel);
      table.row({config_.model.name, b.name, std::string(to_string(variant)), std::to_string(layer),
                 std::to_string(train.size()), std::to_string(test.size()), csv_number(tr.accuracy),
                 csv_number(te.accuracy), csv_number(te.accuracy_same), csv_number(te.accuracy_different)});
      curves[variant].push_back(te.accuracy);
      last_eval[variant] = te;
    }
  }
  for (DatasetVariant variant : kVariants) {
    const auto& e = last_eval.at(variant);
    table.row({config_.model.name, b.name, std::string(to_string(variant)), "majority", "", std::to_string(e.n),
               "", csv_number(e.majority_baseline), "", ""});
  }
  table.save(out() / "tables" / "probe_accuracy.csv");
  outputs.push_back("tables/probe_accuracy.csv");

  std::vector<LineSeries> series;
  for (DatasetVariant variant : kVariants) {
    LineSeries s{std::string(to_string(variant)), {}, curves[variant]};
    for (int l : layers) s.x.push_back(l);
    series.push_back(std::move(s));
  }
  write_text(out() / "figures" / "probe_accuracy.svg",
             line_svg(series, {config_.model.name + ": binding probe test accuracy", "layer", "accuracy",
                               last_eval.at(DatasetVariant::object).majority_baseline}));
  outputs.push_back("figures/probe_accuracy.svg");
  return outputs;
}

// ---------------------------------------------------------------------------
// continuity

std::vector<std::string> Pipeline::continuity() {
  const ViTModel& vit = model();
  const auto& ts = config_.trajectory.ts;
  fs::remove_all(out() / "figures" / "tuning");
  std::vector<std::string> outputs;

  std::map<std::string, std::vector<HeadScoreMatrix>> sweeps;
  for (const auto& spec : config_.shapes) {
    const fs::path dir = out() / "data" / spec.name;
    const auto records = read_manifest(dir / "manifest.jsonl");
    std::vector<Stimulus> stimuli(records.size());
    parallel_for(records.size(), config_.jobs, [&](std::size_t i) { stimuli[i] = load_stimulus(records[i], dir); });
    ContinuityOptions opts = config_.trajectory.options;
    opts.seed = derive_seed(config_.seed, "continuity");
    opts.jobs = config_.jobs;
    auto sweep = continuity_sweep(vit, stimuli, ts, opts);
    for (auto& m : sweep) {
      m.model = config_.model.name;
      m.dataset = spec.name;
    }

    CsvWriter heat({"model", "dataset", "layer", "head", "t", "S", "n"});
    CsvWriter tuning({"model", "dataset", "layer", "head", "t", "S", "n"});
    for (const auto& m : sweep) {
      for (Eigen::Index l = 0; l < m.scores.rows(); ++l) {
        for (Eigen::Index h = 0; h < m.scores.cols(); ++h) {
          const std::vector<std::string> row = {m.model, m.dataset, std::to_string(l), std::to_string(h),
                                                std::to_string(m.t), csv_number(m.scores(l, h)), std::to_string(m.n_used)};
          tuning.row(row);
          if (m.t == 0) heat.row(row);
        }
      }
    }
    heat.save(out() / "tables" / ("heatmap_" + spec.name + ".csv"));
    tuning.save(out() / "tables" / ("tuning_" + spec.name + ".csv"));
    outputs.push_back("tables/heatmap_" + spec.name + ".csv");
    outputs.push_back("tables/tuning_" + spec.name + ".csv");

    const auto zero = std::find_if(sweep.begin(), sweep.end(), [](const HeadScoreMatrix& m) { return m.t == 0; });
    HeatmapSpec hs;
    hs.title = config_.model.name + " / " + spec.name + ": S(0)";
    write_text(out() / "figures" / ("heatmap_" + spec.name + ".svg"), heatmap_svg(zero->scores, hs));
    outputs.push_back("figures/heatmap_" + spec.name + ".svg");
    sweeps[spec.name] = std::move(sweep);
  }

  // Tuning curves of the five highest and five lowest S(0) heads of the
  // scoring dataset, drawn for every shape dataset.
  const auto& ref = sweeps.at(config_.ablation.score_dataset);
  const auto& ref0 = *std::find_if(ref.begin(), ref.end(), [](const HeadScoreMatrix& m) { return m.t == 0; });
  const int total = static_cast<int>(ref0.scores.size());
  const auto ranked = select_top_heads(ref0.scores, total, static_cast<int>(ref0.scores.rows()) - 1);
  const int n_side = std::min(5, total / 2);
  std::vector<std::pair<std::string, HeadId>> picks;
  for (int i = 0; i < n_side; ++i) picks.push_back({fmt::format("top{}", i + 1), ranked[static_cast<std::size_t>(i)]});
  for (int i = 0; i < n_side; ++i)
    picks.push_back({fmt::format("bottom{}", i + 1), ranked[ranked.size() - 1 - static_cast<std::size_t>(i)]});
  for (const auto& [tag, head] : picks) {
    std::vector<LineSeries> series;
    for (const auto& spec : config_.shapes) {
      const SensitivityCurve c = tuning_curve(sweeps.at(spec.name), head);
      LineSeries s{spec.name, {}, c.S};
      for (int t : c.t) s.x.push_back(t);
      series.push_back(std::move(s));
    }
    const std::string rel = fmt::format("figures/tuning/{}_{}.svg", tag, head_label(head));
    write_text(out() / rel,
               line_svg(series, {fmt::format("{} {}: S(t)", config_.model.name, head_label(head)), "t (px)", "S", 1.0}));
    outputs.push_back(rel);
  }

  CsvWriter corr({"model", "dataset_a", "dataset_b", "n", "pearson_r", "pearson_p", "spearman_r", "spearman_p"});
  for (std::size_t i = 0; i < config_.shapes.size(); ++i) {
    for (std::size_t j = i + 1; j < config_.shapes.size(); ++j) {
      auto at_zero = [&](const std::string& name) {
        const auto& s = sweeps.at(name);
        return *std::find_if(s.begin(), s.end(), [](const HeadScoreMatrix& m) { return m.t == 0; });
      };
      const CorrelationReport r = correlate_scores(at_zero(config_.shapes[i].name), at_zero(config_.shapes[j].name));
      corr.row({config_.model.name, r.dataset_a, r.dataset_b, std::to_string(r.n), csv_number(r.pearson.r),
                csv_number(r.pearson.p), csv_number(r.spearman.r), csv_number(r.spearman.p)});
    }
  }
  corr.save(out() / "tables" / "correlations.csv");
  outputs.push_back("tables/correlations.csv");
  return outputs;
}

// ---------------------------------------------------------------------------
// ablate

std::vector<std::string> Pipeline::ablate() {
  const ViTModel& vit = model();
  const auto& cfg = config_.model.vit;
  const auto& b = config_.binding;
  const auto layers = config_.resolved_ablation_layers();
  std::vector<std::string> outputs;

  Eigen::MatrixXd scores = Eigen::MatrixXd::Constant(cfg.n_layers, cfg.n_heads, std::nan(""));
  const auto heat = read_csv(out() / "tables" / ("heatmap_" + config_.ablation.score_dataset + ".csv"));
  for (std::size_t i = 1; i < heat.size(); ++i) {
    const int l = std::stoi(heat[i][2]);
    const int h = std::stoi(heat[i][3]);
    if (l < 0 || l >= cfg.n_layers || h < 0 || h >= cfg.n_heads) throw DataError("heatmap row out of range");
    scores(l, h) = parse_number(heat[i][5]);
  }
  if (scores.hasNaN()) throw DataError("heatmap table does not cover every head");

  struct VariantData {
    std::vector<PairedStimulus> test;
    std::optional<HeadMeanStore> means;
  };
  std::map<DatasetVariant, VariantData> data;
  for (DatasetVariant variant : kVariants) {
    const auto items = binding_items(out(), b.name, variant);
    std::vector<Image> train_images;
    auto& vd = data[variant];
    std::string fingerprint;
    for (const auto& item : items) {
      const Image image = read_png_rgb(out() / "data" / b.name / item.record.image);
      if (item.train) {
        train_images.push_back(image);
        fingerprint += item.record.id + "\n";
        continue;
      }
      const TensorArchive a = TensorArchive::load(activation_path(out(), variant, item.record.id));
      Dump d = read_dump_index(a, item.record.id);
      if (d.pairs.empty()) continue;
      vd.test.push_back({item.record.id, image, std::move(d.patches), std::move(d.pairs)});
    }
    vd.means = compute_head_means(vit, train_images, config_.ablation.mean_mode, sha256_hex(fingerprint), config_.jobs);
    const std::string rel = fmt::format("means/{}.safetensors", to_string(variant));
    fs::create_directories((out() / rel).parent_path());
    vd.means->to_archive().save(out() / rel);
    outputs.push_back(rel);
  }

  std::vector<AblationRun> runs;
  CsvWriter table({"model", "layer", "variant", "control_set", "heads", "baseline", "ablated", "delta"});
  for (int layer : layers) {
    const auto heads = select_top_heads(scores, config_.ablation.k, layer);
    const auto controls =
        heads.empty() ? std::vector<std::vector<HeadId>>(static_cast<std::size_t>(config_.ablation.n_controls))
                      : random_control_sets(heads, cfg.n_layers, cfg.n_heads, config_.ablation.n_controls,
                                            derive_seed(config_.seed, "controls", static_cast<std::uint64_t>(layer)));
    for (DatasetVariant variant : kVariants) {
      const auto& vd = data.at(variant);
      const ProbeParams probe =
          load_probe(out() / fmt::format("probes/{}/{}.safetensors", to_string(variant), layer_key(layer)));
      const AblationContext ctx{&vit, &*vd.means, config_.model.readout, config_.jobs};
      AblationRun ref = run_ablation(probe, ctx, layer, heads, vd.test, variant);
      runs.push_back(ref);
      for (std::size_t c = 0; c < controls.size(); ++c) {
        AblationRun r = run_ablation(probe, ctx, layer, controls[c], vd.test, variant, ref.baseline);
        r.control_set = static_cast<int>(c);
        runs.push_back(std::move(r));
      }
      spdlog::info("ablate: layer {} {} delta {:.4f}", layer, to_string(variant), ref.delta);
    }
  }
  for (const auto& r : runs)
    table.row({config_.model.name, std::to_string(r.layer), std::string(to_string(r.variant)),
               std::to_string(r.control_set), head_list(r.heads), csv_number(r.baseline), csv_number(r.ablated),
               csv_number(r.delta)});
  table.save(out() / "tables" / "ablation.csv");
  outputs.push_back("tables/ablation.csv");

  const SelectivityReport rep = selectivity_report(runs);
  CsvWriter sel({"model", "layer", "variant", "delta_object", "delta_scrambled", "selectivity", "control_q1",
                 "control_median", "control_q3", "above_control_q3"});
  CsvWriter ctl({"model", "layer", "variant", "control_set", "selectivity"});
  std::map<DatasetVariant, std::vector<Bar>> bars;
  for (const auto& rec : rep.layers) {
    for (const auto& [variant, s] : rec.selectivity) {
      const auto& q = rec.control_quartiles.at(variant);
      sel.row({config_.model.name, std::to_string(rec.layer), std::string(to_string(variant)),
               csv_number(rec.delta_object), csv_number(rec.delta_scrambled.at(variant)), csv_number(s),
               csv_number(q.q1), csv_number(q.median), csv_number(q.q3), rec.flagged.at(variant) ? "1" : "0"});
      const auto& cs = rec.control_selectivity.at(variant);
      for (std::size_t c = 0; c < cs.size(); ++c)
        ctl.row({config_.model.name, std::to_string(rec.layer), std::string(to_string(variant)), std::to_string(c),
                 csv_number(cs[c])});
      bars[variant].push_back({std::to_string(rec.layer), s, q.q1, q.q3});
    }
  }
  sel.save(out() / "tables" / "selectivity.csv");
  ctl.save(out() / "tables" / "control_selectivity.csv");
  outputs.push_back("tables/selectivity.csv");
  outputs.push_back("tables/control_selectivity.csv");

  CsvWriter best({"model", "variant", "best_layer", "selectivity"});
  for (const auto& [variant, layer] : rep.best_layer) {
    double s = 0.0;
    for (const auto& rec : rep.layers)
      if (rec.layer == layer) s = rec.selectivity.at(variant);
    best.row({config_.model.name, std::string(to_string(variant)), std::to_string(layer), csv_number(s)});
  }
  best.save(out() / "tables" / "best_layer.csv");
  outputs.push_back("tables/best_layer.csv");

  for (const auto& [variant, bs] : bars) {
    const std::string rel = fmt::format("figures/selectivity_{}.svg", to_string(variant));
    write_text(out() / rel,
               bar_svg(bs, {fmt::format("{}: selectivity vs {} (bars: top-{} heads, band: control IQR)",
                                        config_.model.name, to_string(variant), config_.ablation.k),
                            "delta object - delta scrambled"}));
    outputs.push_back(rel);
  }
  return outputs;
}

// ---------------------------------------------------------------------------
// report

std::vector<std::string> Pipeline::report() {
  const fs::path tables = out() / "tables";
  std::string text = fmt::format("gestalt {} report\nmodel: {}\nseed: {}\n", tool_version(), config_.model.name,
                                 config_.seed);

  if (fs::exists(tables / "probe_accuracy.csv")) {
    text += "\n[probe]\n";
    const auto rows = read_csv(tables / "probe_accuracy.csv");
    std::map<std::string, std::pair<std::string, double>> best;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r[3] == "majority") {
        text += fmt::format("majority baseline ({}): {}\n", r[2], r[7]);
        continue;
      }
      const double acc = parse_number(r[7]);
      auto it = best.find(r[2]);
      if (it == best.end() || acc > it->second.second) best[r[2]] = {r[3], acc};
    }
    for (const auto& [variant, b] : best)
      text += fmt::format("best test accuracy ({}): {} at layer {}\n", variant, csv_number(b.second), b.first);
  } else {
    text += "\n[probe]\nnot run\n";
  }

  text += "\n[continuity]\n";
  for (const auto& spec : config_.shapes) {
    const fs::path p = tables / ("heatmap_" + spec.name + ".csv");
    if (!fs::exists(p)) {
      text += spec.name + ": not run\n";
      continue;
    }
    const auto rows = read_csv(p);
    std::vector<std::pair<double, std::string>> heads;
    double off_layer0 = 0.0;
    int n_off = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double s = parse_number(rows[i][5]);
      heads.push_back({s, "L" + rows[i][2] + "H" + rows[i][3]});
      if (rows[i][2] != "0") {
        off_layer0 += std::abs(s - 1.0);
        ++n_off;
      }
    }
    std::stable_sort(heads.begin(), heads.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    text += spec.name + " top heads by S(0):";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, heads.size()); ++i)
      text += fmt::format(" {}={}", heads[i].second, csv_number(heads[i].first));
    text += '\n';
    if (n_off > 0) text += fmt::format("{} mean |S(0) - 1| outside layer 0: {}\n", spec.name, csv_number(off_layer0 / n_off));
  }
  if (fs::exists(tables / "correlations.csv")) {
    const auto rows = read_csv(tables / "correlations.csv");
    for (std::size_t i = 1; i < rows.size(); ++i)
      text += fmt::format("S(0) correlation {} vs {}: pearson r={} (p={}), spearman r={} (p={}), n={}\n", rows[i][1],
                          rows[i][2], rows[i][4], rows[i][5], rows[i][6], rows[i][7], rows[i][3]);
  }

  text += "\n[ablation]\n";
  if (fs::exists(tables / "selectivity.csv")) {
    const auto rows = read_csv(tables / "selectivity.csv");
    for (std::size_t i = 1; i < rows.size(); ++i)
      text += fmt::format("layer {} vs {}: selectivity {} (controls q1 {} median {} q3 {}){}\n", rows[i][1], rows[i][2],
                          rows[i][5], rows[i][6], rows[i][7], rows[i][8], rows[i][9] == "1" ? " above control q3" : "");
    const auto best = read_csv(tables / "best_layer.csv");
    for (std::size_t i = 1; i < best.size(); ++i)
      text += fmt::format("most selective layer vs {}: {} ({})\n", best[i][1], best[i][2], best[i][3]);
  } else {
    text += "not run\n";
  }

  write_text(out() / "report" / "summary.txt", text);
  return {"report/summary.txt"};
}

}  // namespace gestalt
