#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "dctcn/tensor.hpp"

namespace dctcn {

using NamedTensors = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers little-endian:
//   "DCTC" | u32 version | u32 count |
//   count x { u32 name_len | name | u32 rank | rank x u32 dim | numel x f64 }
void save_checkpoint(const NamedTensors& arrays, const std::filesystem::path& path);
NamedTensors load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const NamedTensors& arrays);
NamedTensors decode_checkpoint(std::string_view bytes);

// Text entries ("__config__", "__metrics__") are stored as rank-1 tensors
// holding one byte value per element.
Tensor string_to_tensor(std::string_view s);
std::string tensor_to_string(const Tensor& t);

} // namespace dctcn
