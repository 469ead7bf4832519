#pragma once

// Model checkpoints: a JSON manifest (config, parameter names, shapes and
// offsets) plus a blob of little-endian float32 values in manifest order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdi/error.hpp"
#include "sdi/io.hpp"
#include "sdi/model.hpp"

namespace sdi {

struct Checkpoint {
  std::string manifest;
  std::vector<std::uint8_t> blob;
};

namespace checkpoint_detail {

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

inline float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return std::bit_cast<float>(bits);
}

}  // namespace checkpoint_detail

// `blob_name` is recorded in the manifest so the pair can be found on disk.
inline Checkpoint save_checkpoint(const SdiModel<float>& model, const nlohmann::json& metadata = nlohmann::json::object(),
                                  const std::string& blob_name = "") {
  Checkpoint ck;
  nlohmann::ordered_json m;
  m["format"] = "sdi-checkpoint";
  m["version"] = 1;
  m["config"] = nlohmann::json(model.config());
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.size();
    for (float v : p.value.values()) checkpoint_detail::put_f32(ck.blob, v);
  }
  m["parameters"] = params;
  m["value_count"] = offset;
  m["blob"] = blob_name;
  m["metadata"] = metadata;
  ck.manifest = m.dump(2) + "\n";
  return ck;
}

inline SdiModel<float> load_checkpoint(const std::string& manifest, std::span<const std::uint8_t> blob) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  try {
    if (m.value("format", "") != "sdi-checkpoint") throw FormatError("not a checkpoint manifest");
    const ModelConfig cfg = m.at("config").get<ModelConfig>();
    SdiModel<float> model(cfg);
    const auto& entries = m.at("parameters");
    auto& params = model.parameters();
    if (entries.size() != params.size())
      throw FormatError("checkpoint lists " + std::to_string(entries.size()) + " parameters, model expects " +
                        std::to_string(params.size()));
    std::size_t expected = 0;
    for (const auto& p : params) expected += p.value.size();
    if (blob.size() != 4 * expected)
      throw FormatError("checkpoint blob has " + std::to_string(blob.size()) + " bytes, expected " +
                        std::to_string(4 * expected) + (blob.size() < 4 * expected ? " (truncated)" : ""));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& e = entries[k];
      const std::string name = e.at("name").get<std::string>();
      if (name != params[k].name)
        throw FormatError("checkpoint parameter " + std::to_string(k) + " is '" + name + "', expected '" +
                          params[k].name + "'");
      const auto shape = e.at("shape").get<std::vector<int>>();
      if (shape != params[k].value.shape())
        throw FormatError("shape mismatch for parameter '" + name + "': checkpoint " + shape_string(shape) +
                          ", model " + shape_string(params[k].value.shape()));
      const auto offset = e.at("offset").get<std::size_t>();
      if (offset + params[k].value.size() > expected) throw FormatError("offset out of range for '" + name + "'");
      const std::uint8_t* src = blob.data() + 4 * offset;
      for (std::size_t i = 0; i < params[k].value.size(); ++i) params[k].value[i] = checkpoint_detail::get_f32(src + 4 * i);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
}

inline nlohmann::json checkpoint_metadata(const std::string& manifest) {
  return nlohmann::json::parse(manifest).value("metadata", nlohmann::json::object());
}

// On disk: the manifest at `path`, the blob at `path` + ".bin".
inline void write_checkpoint(const std::string& path, const SdiModel<float>& model, bool force,
                             const nlohmann::json& metadata = nlohmann::json::object()) {
  const std::string blob_path = path + ".bin";
  const Checkpoint ck = save_checkpoint(model, metadata, std::filesystem::path(blob_path).filename().string());
  for (const std::string& p : {path, blob_path})
    if (!force && std::filesystem::exists(p)) throw ArgumentError("refusing to overwrite '" + p + "' (pass --force)");
  write_file_atomic(blob_path, ck.blob, force);
  write_file_atomic(path, ck.manifest, force);
}

inline SdiModel<float> read_checkpoint(const std::string& path) {
  namespace fs = std::filesystem;
  const std::vector<std::uint8_t> raw = read_binary_file(path);
  const std::string manifest(raw.begin(), raw.end());
  std::string blob_name;
  try {
    blob_name = nlohmann::json::parse(manifest).value("blob", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest '" + path + "' is not valid JSON");
  }
  const fs::path blob_path = blob_name.empty() ? fs::path(path + ".bin") : fs::path(path).parent_path() / blob_name;
  return load_checkpoint(manifest, read_binary_file(blob_path.string()));
}

}  // namespace sdi
