#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "svae/model.hpp"

namespace svae {

// On-disk layout (all integers little-endian):
//
//   "SVAE1\n"
//   key=value\n ...            plain-text header, one entry per line
//   "end_header\n"
//   u32 array_count
//   per array: u32 name_len, name bytes, u32 rank, u64 dims[rank], f64 data[numel]
//   u32 crc32 of everything after "end_header\n" up to this field
struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<NamedTensor> arrays;

  const Tensor* find(const std::string& name) const;
};

inline constexpr const char* kCheckpointMagic = "SVAE1";

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws FormatError on bad magic, truncation or checksum mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Model config goes into the header under "model." keys; parameters are
// stored under their own names.
Checkpoint model_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace svae
