#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gestalt/error.hpp"
#include "gestalt/hash.hpp"
#include "gestalt/pipeline.hpp"

namespace gestalt {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "run_manifest.json";
constexpr const char* kLockName = ".gestalt.lock";

}  // namespace

RunManifest RunManifest::load_or_new(const fs::path& out_dir) {
  RunManifest m;
  m.root_ = out_dir;
  const fs::path path = out_dir / kManifestName;
  if (!fs::exists(path)) return m;
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  m.config_ = j.value("config", nlohmann::json::object());
  const nlohmann::json stages = j.value("stages", nlohmann::json::object());
  for (const auto& [name, s] : stages.items()) {
    StageRecord r;
    r.status = s.value("status", "incomplete");
    r.input_hash = s.value("input_hash", "");
    r.started = s.value("started", "");
    r.finished = s.value("finished", "");
    r.outputs = s.value("outputs", std::map<std::string, std::string>{});
    m.stages_[name] = std::move(r);
  }
  return m;
}

void RunManifest::save() const {
  nlohmann::json stages = nlohmann::json::object();
  bool complete = !stages_.empty();
  for (const auto& [name, r] : stages_) {
    stages[name] = {{"status", r.status},
                    {"input_hash", r.input_hash},
                    {"started", r.started},
                    {"finished", r.finished},
                    {"outputs", r.outputs}};
    complete = complete && r.status == "complete";
  }
  const nlohmann::json j = {{"tool", "gestalt"},
                            {"tool_version", std::string(tool_version())},
                            {"status", complete ? "complete" : "incomplete"},
                            {"config", config_},
                            {"stages", stages}};
  fs::create_directories(root_);
  const fs::path tmp = root_ / (std::string(kManifestName) + ".tmp");
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  fs::rename(tmp, root_ / kManifestName);
}

bool RunManifest::up_to_date(const std::string& stage, const std::string& input_hash) const {
  const auto it = stages_.find(stage);
  if (it == stages_.end() || it->second.status != "complete" || it->second.input_hash != input_hash) return false;
  for (const auto& [rel, digest] : it->second.outputs) {
    const fs::path p = root_ / rel;
    if (!fs::exists(p) || sha256_file(p) != digest) return false;
  }
  return true;
}

std::string RunManifest::outputs_hash(std::span<const std::string> stages) const {
  std::string all;
  for (const auto& s : stages) {
    const auto it = stages_.find(s);
    all += s + "\n";
    if (it == stages_.end()) continue;
    for (const auto& [rel, digest] : it->second.outputs) all += rel + " " + digest + "\n";
  }
  return sha256_hex(all);
}

OutputLock::OutputLock(const fs::path& out_dir) : path_(out_dir / kLockName) {
  fs::create_directories(out_dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw ConfigError("output directory " + out_dir.string() + " is in use by another run (remove " + path_.string() +
                      " if it is stale)");
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  return fmt::format("{:.10g}", v);
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + csv_field(header[i]);
  text_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_)
    throw DataError("csv row has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(columns_));
  for (std::size_t i = 0; i < fields.size(); ++i) text_ += (i ? "," : "") + csv_field(fields[i]);
  text_ += '\n';
  ++rows_;
}

void CsvWriter::save(const fs::path& path) const {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text_;
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gestalt
