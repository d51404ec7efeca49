#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nudrew/tensor.hpp"

namespace nudrew {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary layout, all integers and doubles little-endian:
//   "NUDREWCK" u32 version u64 count
//   count x { u32 name_len, name bytes, u32 rank, rank x i64 dim, numel x f64 }
void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace nudrew
