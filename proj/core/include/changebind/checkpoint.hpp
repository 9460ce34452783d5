#pragma once

#include <filesystem>
#include <vector>

#include "changebind/layers.hpp"

namespace changebind {

// Checkpoint layout, all integers little-endian:
//
//   magic    4 bytes  "CBKP"
//   version  u32      1
//   count    u32      number of tensors
//   per tensor:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank     u32, dims u64 x rank
//     data     IEEE-754 binary32 x product(dims), little-endian
//
// 64-bit tensors are narrowed to binary32 on write.

inline constexpr char kCheckpointMagic[4] = {'C', 'B', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const ParameterSet& parameters);
/// Copies checkpoint values into `parameters` in place. Every parameter
/// must be present with an identical shape; extra entries are an error.
void load_parameters(const std::filesystem::path& path, const ParameterSet& parameters);

} // namespace changebind
