#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gestalt/ablation.hpp"
#include "gestalt/continuity.hpp"
#include "gestalt/probe.hpp"
#include "gestalt/stimulus.hpp"
#include "gestalt/vit.hpp"

namespace gestalt {

std::string_view tool_version();

// ---------------------------------------------------------------------------
// Configuration

struct ModelSpec {
  std::string name = "untrained";
  // Empty archive means an untrained model drawn from untrained_seed.
  std::filesystem::path archive;
  std::filesystem::path config_file;
  std::uint64_t untrained_seed = 0;
  ViTConfig vit;
  ReadoutMode readout = ReadoutMode::residual;
};

struct ShapeDatasetSpec {
  std::string name;
  StimulusKind kind = StimulusKind::blob;
  int count = 50;
  std::optional<std::uint64_t> seed;
  BlobParams blob;
  CurveParams curve;
};

struct BindingDatasetSpec {
  std::string name = "binding";
  int count = 100;
  std::optional<std::uint64_t> seed;
  BindingParams params;
  double test_fraction = 0.25;
  PairSamplingOptions pairs;
};

struct TrajectorySpec {
  std::vector<int> ts;  // must contain 0
  ContinuityOptions options;
};

struct AblationSpec {
  int k = 5;
  int n_controls = 20;
  MeanMode mean_mode = MeanMode::positional;
  std::vector<int> layers;  // empty = every layer
  std::string score_dataset;  // shape dataset whose S(0) ranks the heads
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output = "gestalt-out";
  int jobs = 1;
  int patch_size = 16;
  ModelSpec model;
  std::vector<ShapeDatasetSpec> shapes;
  BindingDatasetSpec binding;
  TrainConfig probe;
  std::vector<int> probe_layers;  // empty = every layer
  TrajectorySpec trajectory;
  AblationSpec ablation;

  // Relative paths inside the config resolve against this directory.
  std::filesystem::path base_dir;

  void validate() const;
  std::vector<int> resolved_probe_layers() const;
  std::vector<int> resolved_ablation_layers() const;
  nlohmann::json snapshot() const;
};

PipelineConfig parse_pipeline_config(std::string_view yaml, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run manifest

struct StageRecord {
  std::string status;  // complete | incomplete
  std::string input_hash;
  std::string started;
  std::string finished;
  std::map<std::string, std::string> outputs;  // relative path -> sha256
};

class RunManifest {
 public:
  static RunManifest load_or_new(const std::filesystem::path& out_dir);
  void save() const;

  const std::filesystem::path& root() const { return root_; }
  nlohmann::json& config() { return config_; }
  std::map<std::string, StageRecord>& stages() { return stages_; }
  const std::map<std::string, StageRecord>& stages() const { return stages_; }

  // True when the stage completed with this input hash and every listed
  // output is still present with its recorded hash.
  bool up_to_date(const std::string& stage, const std::string& input_hash) const;
  // Hash of every recorded output of the listed stages.
  std::string outputs_hash(std::span<const std::string> stages) const;

 private:
  std::filesystem::path root_;
  nlohmann::json config_ = nlohmann::json::object();
  std::map<std::string, StageRecord> stages_;
};

// One pipeline per output directory: creating the lock fails when another
// run holds it. Released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& out_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Stages

enum class Stage { generate, activations, probe, continuity, ablate, report };
std::string_view to_string(Stage s);
const std::vector<Stage>& all_stages();

struct StageOutcome {
  Stage stage;
  bool skipped = false;
  std::vector<std::string> outputs;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  // Runs one stage, reusing its previous outputs when the inputs are
  // unchanged. The manifest marks the stage incomplete until it finishes.
  StageOutcome run(Stage stage, bool force = false);
  std::vector<StageOutcome> run_all(bool force = false);

  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& out() const { return config_.output; }

 private:
  std::vector<std::string> generate();
  std::vector<std::string> activations();
  std::vector<std::string> probe();
  std::vector<std::string> continuity();
  std::vector<std::string> ablate();
  std::vector<std::string> report();

  const ViTModel& model();
  std::string input_hash(Stage stage) const;

  PipelineConfig config_;
  RunManifest manifest_;
  std::optional<ViTModel> model_;
};

// ---------------------------------------------------------------------------
// CSV

// Numbers are printed with 10 significant digits; fields containing commas or
// quotes are quoted.
std::string csv_number(double v);
std::string csv_field(const std::string& text);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& fields);
  const std::string& text() const { return text_; }
  std::size_t rows() const { return rows_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

// Splits a CSV produced by CsvWriter; the first row is the header.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace gestalt
