// Copyright 2026 The so3flow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint = manifest (JSON: model config + per-tensor name/shape/offset/count)
// and blob (little-endian float32 values concatenated in manifest order).

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "so3flow/neural/model.hpp"

namespace so3flow::neural {

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"d_s", c.d_s},
          {"d_g", c.d_g},
          {"d_z", c.d_z},
          {"encoder_hidden", c.encoder_hidden},
          {"hidden", c.hidden},
          {"box_hidden", c.box_hidden},
          {"n_categories", c.n_categories},
          {"time_frequencies", c.time_frequencies},
          {"fusion", std::string(to_string(c.fusion))},
          {"rotation_head", std::string(to_string(c.rotation_head))},
          {"rng_seed", c.rng_seed}};
}

/// Missing keys keep their defaults.
inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_s = j.value("d_s", c.d_s);
  c.d_g = j.value("d_g", c.d_g);
  c.d_z = j.value("d_z", c.d_z);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.hidden = j.value("hidden", c.hidden);
  c.box_hidden = j.value("box_hidden", c.box_hidden);
  c.n_categories = j.value("n_categories", c.n_categories);
  c.time_frequencies = j.value("time_frequencies", c.time_frequencies);
  if (j.contains("fusion")) c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
  if (j.contains("rotation_head")) c.rotation_head = rotation_head_from_string(j.at("rotation_head").get<std::string>());
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  return c;
}

inline std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

/// Writes `<manifest>` and its blob next to it (same stem, `.bin`).
inline void save_checkpoint(const Model& model, const std::filesystem::path& manifest_path) {
  const auto blob_path = blob_path_for(manifest_path);
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<unsigned char> bytes;
  bytes.reserve(model.params.total_count() * 4);
  for (const auto& e : model.params.entries()) {
    tensors.push_back({{"name", e.name},
                       {"shape", e.tensor.shape},
                       {"offset", bytes.size()},
                       {"count", e.tensor.size()}});
    for (float v : e.tensor.data) {
      auto u = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xFFu));
    }
  }
  nlohmann::json manifest = {{"format", "so3flow-checkpoint"},
                             {"version", 1},
                             {"config", config_to_json(model.config)},
                             {"blob", blob_path.filename().string()},
                             {"total_bytes", bytes.size()},
                             {"tensors", tensors}};
  if (manifest_path.has_parent_path()) std::filesystem::create_directories(manifest_path.parent_path());
  std::ofstream m(manifest_path);
  if (!m) throw Error(ErrorKind::IoError, "cannot write " + manifest_path.string());
  m << manifest.dump(2) << '\n';
  std::ofstream b(blob_path, std::ios::binary);
  if (!b) throw Error(ErrorKind::IoError, "cannot write " + blob_path.string());
  b.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!m || !b) throw Error(ErrorKind::IoError, "short write for checkpoint");
}

inline Model load_checkpoint(const std::filesystem::path& manifest_path) {
  std::ifstream m(manifest_path);
  if (!m) throw Error(ErrorKind::IoError, "cannot read " + manifest_path.string());
  nlohmann::json manifest;
  try {
    m >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("manifest parse: ") + e.what());
  }
  if (manifest.value("format", "") != "so3flow-checkpoint") throw Error(ErrorKind::BadCheckpoint, "not a checkpoint manifest");

  const auto blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream b(blob_path, std::ios::binary);
  if (!b) throw Error(ErrorKind::IoError, "cannot read " + blob_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());

  ModelConfig cfg;
  try {
    cfg = config_from_json(manifest.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("config: ") + e.what());
  }
  ParameterStore store(cfg.rng_seed);
  std::size_t expected = 0;
  for (const auto& t : manifest.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = t.at("count").get<std::size_t>();
    if (offset != expected) throw Error(ErrorKind::BadCheckpoint, "non-contiguous tensor offset for " + name);
    auto& tensor = store.add(name, shape);
    if (tensor.size() != count) throw Error(ErrorKind::BadCheckpoint, "count/shape mismatch for " + name);
    if (offset + 4 * count > bytes.size()) throw Error(ErrorKind::BadCheckpoint, "blob too short");
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(bytes[offset + 4 * i + k]) << (8 * k);
      tensor.data[i] = std::bit_cast<float>(u);
    }
    expected = offset + 4 * count;
  }
  if (expected != bytes.size() || manifest.value("total_bytes", std::size_t{0}) != bytes.size()) {
    throw Error(ErrorKind::BadCheckpoint, "blob length does not match manifest");
  }
  try {
    return Model(cfg, std::move(store));
  } catch (const Error& e) {
    throw Error(ErrorKind::BadCheckpoint, e.what());
  }
}

}  // namespace so3flow::neural
