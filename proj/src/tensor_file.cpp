#include "synloc/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "synloc/error.hpp"

namespace synloc {

namespace {

static_assert(std::endian::native == std::endian::little, "canonical weight files are little-endian");

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::int64_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

const Tensor& TensorFile::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("tensor '" + name + "' not found");
  return it->second;
}

TensorFile TensorFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file " + path.string());
  unsigned char len_bytes[8];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) {
    throw DataError(path.string() + ": truncated header length");
  }
  const std::uint64_t header_len = read_u64_le(len_bytes);
  const auto file_size = std::filesystem::file_size(path);
  if (header_len > file_size - 8) throw DataError(path.string() + ": header length exceeds file size");
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw DataError(path.string() + ": truncated header");
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  const std::uint64_t data_size = file_size - 8 - header_len;
  std::vector<char> data(data_size);
  if (!in.read(data.data(), static_cast<std::streamsize>(data_size))) {
    throw DataError(path.string() + ": truncated data section");
  }

  TensorFile out;
  for (const auto& [name, info] : doc.items()) {
    if (name == "__metadata__") {
      for (const auto& [k, v] : info.items()) {
        if (v.is_string()) out.metadata_[k] = v.get<std::string>();
      }
      continue;
    }
    try {
      if (info.at("dtype").get<std::string>() != "F32") {
        throw DataError(path.string() + ": tensor '" + name + "' has unsupported dtype " +
                        info.at("dtype").get<std::string>());
      }
      Tensor t;
      t.shape = info.at("shape").get<std::vector<std::int64_t>>();
      const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2 || offsets[1] < offsets[0] || offsets[1] > data_size) {
        throw DataError(path.string() + ": tensor '" + name + "' has invalid data offsets");
      }
      const std::uint64_t bytes = offsets[1] - offsets[0];
      if (bytes != static_cast<std::uint64_t>(t.numel()) * sizeof(float)) {
        throw DataError(path.string() + ": tensor '" + name + "' size does not match its shape");
      }
      t.values.resize(static_cast<std::size_t>(t.numel()));
      std::memcpy(t.values.data(), data.data() + offsets[0], bytes);
      out.tensors_.emplace(name, std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": malformed entry for '" + name + "': " + e.what());
    }
  }
  return out;
}

void TensorFile::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json header;
  if (!metadata_.empty()) {
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (const auto& [k, v] : metadata_) meta[k] = v;
    header["__metadata__"] = meta;
  }
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    const std::uint64_t bytes = t.values.size() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  while ((text.size() + 8) % 8 != 0) text.push_back(' ');
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::uint64_t len = text.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors_) {
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace synloc
