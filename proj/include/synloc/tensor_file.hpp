#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace synloc {

/// A dense float32 tensor held in memory.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  std::int64_t numel() const;
};

/// Reader/writer for the canonical weight container, which is the
/// safetensors layout: an 8-byte little-endian header length, a JSON header
/// mapping tensor names to dtype/shape/data_offsets (plus an optional
/// `__metadata__` string map), then raw little-endian data. Only F32 tensors
/// are supported.
class TensorFile {
 public:
  static TensorFile load(const std::filesystem::path& path);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  std::map<std::string, Tensor>& mutable_tensors() { return tensors_; }
  std::map<std::string, std::string>& mutable_metadata() { return metadata_; }

  /// Writes tensors in name order; byte-identical for identical content.
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, Tensor> tensors_;
  std::map<std::string, std::string> metadata_;
};

}  // namespace synloc
