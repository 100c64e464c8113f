#include "gestalt/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "gestalt/error.hpp"

static_assert(std::endian::native == std::endian::little, "tensor archives assume a little-endian host");

namespace gestalt {

std::size_t element_count(std::span<const std::int64_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DataError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(std::span<const std::int64_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::int64_t> shape_, std::vector<float> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  if (element_count(shape) != values.size()) {
    throw DataError("tensor of shape " + shape_string(shape) + " given " + std::to_string(values.size()) +
                    " values");
  }
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape_) {
  const std::size_t n = element_count(shape_);
  return Tensor(std::move(shape_), std::vector<float>(n, 0.0f));
}

const Tensor& TensorArchive::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("missing tensor '" + name + "'");
  return it->second;
}

void TensorArchive::insert(const std::string& name, Tensor tensor) {
  if (name == "__metadata__") throw DataError("reserved tensor name");
  tensors_.insert_or_assign(name, std::move(tensor));
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open archive '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes, path.string());
}

TensorArchive TensorArchive::parse(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < 8) throw DataError("'" + origin + "' is too short to be a tensor archive");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data(), 8);
  if (header_len > bytes.size() - 8) throw DataError("'" + origin + "' has a truncated header");
  const auto header_begin = bytes.begin() + 8;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_begin, header_begin + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + origin + "' header: " + e.what());
  }
  const std::span<const std::uint8_t> payload = bytes.subspan(8 + header_len);

  TensorArchive archive;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      for (const auto& [k, v] : entry.items()) archive.metadata_[k] = v.get<std::string>();
      continue;
    }
    const std::string dtype = entry.at("dtype").get<std::string>();
    if (dtype != "F32") throw DataError("tensor '" + name + "' has unsupported dtype " + dtype);
    auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > payload.size()) {
      throw DataError("tensor '" + name + "' has invalid data offsets");
    }
    const std::size_t n = element_count(shape);
    if (offsets[1] - offsets[0] != n * sizeof(float)) {
      throw DataError("tensor '" + name + "' byte range does not match shape " + shape_string(shape));
    }
    std::vector<float> values(n);
    if (n) std::memcpy(values.data(), payload.data() + offsets[0], n * sizeof(float));
    archive.tensors_.emplace(name, Tensor(std::move(shape), std::move(values)));
  }
  return archive;
}

std::vector<std::uint8_t> TensorArchive::serialize() const {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    const std::uint64_t bytes = t.values.size() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!metadata_.empty()) header["__metadata__"] = metadata_;
  std::string text = header.dump();
  while (text.size() % 8 != 0) text.push_back(' ');

  std::vector<std::uint8_t> out(8 + text.size() + offset);
  const std::uint64_t len = text.size();
  std::memcpy(out.data(), &len, 8);
  std::memcpy(out.data() + 8, text.data(), text.size());
  std::size_t pos = 8 + text.size();
  for (const auto& [name, t] : tensors_) {
    const std::size_t bytes = t.values.size() * sizeof(float);
    if (bytes) std::memcpy(out.data() + pos, t.values.data(), bytes);
    pos += bytes;
  }
  return out;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write archive '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing archive '" + path.string() + "'");
}

}  // namespace gestalt
