#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gestalt {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape_, std::vector<float> values_);
  static Tensor zeros(std::vector<std::int64_t> shape_);

  std::size_t numel() const { return values.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t element_count(std::span<const std::int64_t> shape);
std::string shape_string(std::span<const std::int64_t> shape);

// Named f32 tensors in the safetensors container: an 8-byte little-endian
// header length, a JSON header mapping names to dtype/shape/byte ranges, then
// the raw little-endian payload. Saving writes names in sorted order with the
// header space-padded to a multiple of 8 bytes, so save(load(a)) reproduces
// any archive written by this class byte for byte.
class TensorArchive {
 public:
  static TensorArchive load(const std::filesystem::path& path);
  static TensorArchive parse(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

  void save(const std::filesystem::path& path) const;
  std::vector<std::uint8_t> serialize() const;

  bool contains(const std::string& name) const { return tensors_.contains(name); }
  // Throws DataError naming the tensor when absent.
  const Tensor& at(const std::string& name) const;
  void insert(const std::string& name, Tensor tensor);

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  friend bool operator==(const TensorArchive&, const TensorArchive&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
  std::map<std::string, std::string> metadata_;
};

}  // namespace gestalt
