#include "xeroalign/serialization.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "json.hpp"
#include "xeroalign/errors.hpp"

namespace xeroalign {
namespace {

using nlohmann::json;

void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  return std::filesystem::path(stem.string() + ext);
}

}  // namespace

void write_archive(const std::filesystem::path& stem, const std::vector<ArchiveEntry>& entries) {
  json manifest = json::array();
  std::string blob;
  for (const auto& e : entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw CheckpointError("archive: entry '" + e.name + "' has " + std::to_string(e.values.size()) +
                            " values for shape " + shape_str(e.shape));
    }
    manifest.push_back({{"name", e.name}, {"shape", e.shape}, {"dtype", "f64"}, {"offset", blob.size()}});
    for (double v : e.values) put_le(blob, v);
  }
  std::ofstream js(with_ext(stem, ".json"));
  std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!js || !bin) throw CheckpointError("archive: cannot write " + stem.string());
  js << json{{"format", "xeroalign-archive-1"}, {"entries", manifest}}.dump(1) << "\n";
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!js || !bin) throw CheckpointError("archive: write failed for " + stem.string());
}

std::vector<ArchiveEntry> read_archive(const std::filesystem::path& stem) {
  std::ifstream js(with_ext(stem, ".json"));
  std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
  if (!js || !bin) throw CheckpointError("archive: missing " + stem.string() + ".json or .bin");
  const std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  json doc;
  try {
    doc = json::parse(js);
  } catch (const json::exception& e) {
    throw CheckpointError("archive: bad manifest " + stem.string() + ".json: " + e.what());
  }
  std::vector<ArchiveEntry> out;
  try {
    for (const auto& item : doc.at("entries")) {
      ArchiveEntry e;
      e.name = item.at("name").get<std::string>();
      e.shape = item.at("shape").get<Shape>();
      if (item.at("dtype").get<std::string>() != "f64") throw CheckpointError("archive: unsupported dtype for " + e.name);
      const auto offset = item.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(e.shape);
      if (offset + 8 * n > blob.size()) throw CheckpointError("archive: blob too short for entry '" + e.name + "'");
      e.values.resize(n);
      const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
      for (std::size_t i = 0; i < n; ++i) e.values[i] = get_le(base + 8 * i);
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("archive: malformed manifest " + stem.string() + ".json: " + e.what());
  }
  return out;
}

ArchiveEntry to_entry(const NamedTensor& t) {
  return {t.name, t.tensor.shape(), std::vector<double>(t.tensor.data().begin(), t.tensor.data().end())};
}

void assign_entries(const std::vector<ArchiveEntry>& entries, const std::vector<NamedTensor>& params) {
  std::unordered_map<std::string, const ArchiveEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw CheckpointError("archive: no entry for parameter '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw CheckpointError("archive: shape " + shape_str(it->second->shape) + " for '" + p.name + "', expected " +
                            shape_str(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    std::copy(it->second->values.begin(), it->second->values.end(), t.mutable_data().begin());
  }
}

}  // namespace xeroalign
