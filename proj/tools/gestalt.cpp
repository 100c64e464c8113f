#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gestalt/error.hpp"
#include "gestalt/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
  bool force = false;
  bool quiet = false;
};

int run(const Options& o, const std::vector<gestalt::Stage>& stages) {
  gestalt::PipelineConfig cfg = gestalt::load_pipeline_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (!o.out.empty()) cfg.output = o.out;
  cfg.validate();
  gestalt::OutputLock lock(cfg.output);
  gestalt::Pipeline pipeline(std::move(cfg));
  for (gestalt::Stage s : stages) {
    const auto outcome = pipeline.run(s, o.force);
    std::cout << gestalt::to_string(s) << ": " << (outcome.skipped ? "up to date" : "done") << " ("
              << outcome.outputs.size() << " files)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gestalt continuity analysis of vision transformer attention heads"};
  app.set_version_flag("--version", std::string(gestalt::tool_version()));
  app.require_subcommand(1);
  Options o;

  const std::vector<std::pair<gestalt::Stage, std::string>> stage_cmds = {
      {gestalt::Stage::generate, "Generate stimulus datasets (PNG images, masks, manifests)"},
      {gestalt::Stage::activations, "Dump patch activations and sampled pairs of the binding datasets"},
      {gestalt::Stage::probe, "Train and evaluate binding probes per layer and dataset variant"},
      {gestalt::Stage::continuity, "Score attention heads for continuity sensitivity"},
      {gestalt::Stage::ablate, "Mean-ablate top continuity heads and random control sets"},
      {gestalt::Stage::report, "Summarise the emitted tables"},
  };
  std::vector<std::pair<CLI::App*, std::vector<gestalt::Stage>>> commands;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", o.config, "Pipeline config (YAML)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Root seed, overrides the config");
    cmd->add_option("-j,--jobs", o.jobs, "Worker threads, overrides the config")->check(CLI::PositiveNumber);
    cmd->add_option("-o,--out", o.out, "Output directory, overrides the config");
    cmd->add_flag("--force", o.force, "Rerun stages even when their inputs are unchanged");
    cmd->add_flag("-q,--quiet", o.quiet, "Only log warnings");
  };
  for (const auto& [stage, help] : stage_cmds) {
    auto* cmd = app.add_subcommand(std::string(gestalt::to_string(stage)), help);
    add_common(cmd);
    commands.push_back({cmd, {stage}});
  }
  auto* all = app.add_subcommand("all", "Run every stage in order");
  add_common(all);
  commands.push_back({all, gestalt::all_stages()});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("gestalt"));
  spdlog::set_level(o.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    for (const auto& [cmd, stages] : commands)
      if (cmd->parsed()) return run(o, stages);
  } catch (const gestalt::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const gestalt::DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const gestalt::NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
