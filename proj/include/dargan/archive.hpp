// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Checkpoint archive: one file mapping layer-path strings to shaped float64
// arrays, preceded by a JSON header.
//
//   bytes 0..7   magic "DRGNARC1"
//   u64          header length, then header JSON (UTF-8)
//   u64          entry count
//   per entry    u64 name length, name, u64 rank, rank x i64 dims,
//                numel x f64 (little-endian IEEE-754)
//
// Entries are written in lexicographic name order, so equal contents give
// byte-identical files.

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "dargan/nn.hpp"

namespace dargan {

struct Archive {
  nlohmann::json header = nlohmann::json::object();
  std::map<std::string, nn::Tensor> arrays;

  /// Copies every parameter and buffer of `params` into the archive.
  void PutParams(const nn::ParamSet& params);
  /// Loads matching entries into `params`; missing or misshapen entries throw.
  void GetParams(nn::ParamSet& params) const;
  /// Copies `state` under "<prefix>/<key>".
  void PutGroup(const std::string& prefix,
                const std::map<std::string, nn::Tensor>& state);
  std::map<std::string, nn::Tensor> GetGroup(const std::string& prefix) const;
};

void SaveArchive(const std::filesystem::path& path, const Archive& archive);
Archive LoadArchive(const std::filesystem::path& path);

}  // namespace dargan
