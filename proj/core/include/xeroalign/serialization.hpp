#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xeroalign/tensor.hpp"

namespace xeroalign {

struct ArchiveEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Writes `<stem>.json` (name, shape, dtype "f64", byte offset per entry) and
// `<stem>.bin` (values as little-endian IEEE-754 doubles, concatenated).
void write_archive(const std::filesystem::path& stem, const std::vector<ArchiveEntry>& entries);

// Throws CheckpointError on missing files, bad manifests or short blobs.
std::vector<ArchiveEntry> read_archive(const std::filesystem::path& stem);

ArchiveEntry to_entry(const NamedTensor& t);
// Copies values into `params` by name; shapes must match and every name must be present.
void assign_entries(const std::vector<ArchiveEntry>& entries, const std::vector<NamedTensor>& params);

}  // namespace xeroalign
