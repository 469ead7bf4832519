#pragma once

// File helpers: whole-file reads and atomic (temp + rename) writes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdi/error.hpp"

namespace sdi {

inline std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Refuses to replace an existing file unless `force`. The data lands in a
// sibling temporary first and is renamed into place.
inline void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes, bool force) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (fs::exists(target) && !force) throw ArgumentError("refusing to overwrite '" + path + "' (pass --force)");
  if (target.has_parent_path() && !fs::exists(target.parent_path())) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot rename into '" + path + "': " + ec.message());
  }
}

inline void write_file_atomic(const std::string& path, std::string_view text, bool force) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
                    force);
}

}  // namespace sdi
