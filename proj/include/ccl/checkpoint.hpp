#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccl/errors.hpp"
#include "ccl/model.hpp"

namespace ccl {

// Checkpoint = <path>.json manifest + <path>.bin little-endian float64 blob.
// Round trips are bit-exact: doubles are memcpy'd, never formatted.

inline void save_checkpoint(const std::string& path_prefix, const ParameterSet& params) {
  nlohmann::json manifest;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  const auto parent = std::filesystem::path(path_prefix).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream blob(path_prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!blob) throw DataError("checkpoint: cannot write " + path_prefix + ".bin");
  static_assert(std::endian::native == std::endian::little,
                "checkpoint blob assumes a little-endian host");
  for (const auto& [name, t] : params) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["offset_bytes"] = offset;
    entries.push_back(e);
    blob.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    offset += t.data.size() * sizeof(double);
  }
  manifest["params"] = entries;
  manifest["total_bytes"] = offset;
  std::ofstream mf(path_prefix + ".json", std::ios::trunc);
  if (!mf) throw DataError("checkpoint: cannot write " + path_prefix + ".json");
  mf << manifest.dump(2) << "\n";
}

inline ParameterSet load_checkpoint(const std::string& path_prefix) {
  std::ifstream mf(path_prefix + ".json");
  if (!mf) throw DataError("checkpoint: missing manifest " + path_prefix + ".json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: bad manifest " + path_prefix + ".json: " + e.what());
  }
  if (manifest.value("dtype", "") != "float64")
    throw DataError("checkpoint: unsupported dtype in " + path_prefix + ".json");
  std::ifstream blob(path_prefix + ".bin", std::ios::binary);
  if (!blob) throw DataError("checkpoint: missing blob " + path_prefix + ".bin");
  ParameterSet params;
  for (const auto& e : manifest.at("params")) {
    const std::string name = e.at("name").get<std::string>();
    const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    blob.seekg(static_cast<std::streamoff>(e.at("offset_bytes").get<std::uint64_t>()));
    blob.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!blob) throw DataError("checkpoint: truncated blob for parameter " + name);
    params[name] = std::move(t);
  }
  return params;
}

}  // namespace ccl
