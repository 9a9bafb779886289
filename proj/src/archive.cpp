// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dargan {
namespace {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'R', 'G', 'N', 'A', 'R', 'C', '1'};

void PutU64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t GetU64(std::istream& is, const std::string& where) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw FormatError(where + ": truncated archive");
  return v;
}

}  // namespace

void Archive::PutParams(const nn::ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    arrays[params.names()[i]] = params.At(i).value();
  for (const auto& [name, t] : params.buffers()) arrays[name] = t;
}

void Archive::GetParams(nn::ParamSet& params) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.names()[i];
    auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError("archive missing parameter " + name);
    nn::Var p = params.At(i);
    if (it->second.shape != p.shape())
      throw FormatError("archive shape mismatch for " + name + ": " +
                        nn::ShapeString(it->second.shape) + " vs " +
                        nn::ShapeString(p.shape()));
    p.mutable_value() = it->second;
  }
  for (auto& [name, t] : params.buffers()) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError("archive missing buffer " + name);
    t = it->second;
  }
}

void Archive::PutGroup(const std::string& prefix,
                       const std::map<std::string, nn::Tensor>& state) {
  for (const auto& [k, v] : state) arrays[prefix + "/" + k] = v;
}

std::map<std::string, nn::Tensor> Archive::GetGroup(
    const std::string& prefix) const {
  std::map<std::string, nn::Tensor> out;
  const std::string p = prefix + "/";
  for (auto it = arrays.lower_bound(p);
       it != arrays.end() && it->first.compare(0, p.size(), p) == 0; ++it)
    out[it->first.substr(p.size())] = it->second;
  return out;
}

void SaveArchive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    const std::string header = archive.header.dump();
    PutU64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    PutU64(os, archive.arrays.size());
    for (const auto& [name, t] : archive.arrays) {
      PutU64(os, name.size());
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      PutU64(os, t.shape.size());
      for (int d : t.shape) {
        const std::int64_t v = d;
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
      os.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive LoadArchive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open archive " + path.string());
  const std::string where = path.string();
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError(where + ": not a checkpoint archive");
  Archive a;
  const auto header_len = GetU64(is, where);
  std::string header(header_len, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(header_len)))
    throw FormatError(where + ": truncated header");
  a.header = nlohmann::json::parse(header);
  const auto count = GetU64(is, where);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = GetU64(is, where);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw FormatError(where + ": truncated entry name");
    const auto rank = GetU64(is, where);
    nn::Shape shape(rank);
    for (auto& d : shape) {
      std::int64_t v = 0;
      if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw FormatError(where + ": truncated shape");
      d = static_cast<int>(v);
    }
    nn::Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double))))
      throw FormatError(where + ": truncated data for " + name);
    a.arrays.emplace(std::move(name), std::move(t));
  }
  return a;
}

}  // namespace dargan
