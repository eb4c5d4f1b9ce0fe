#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "scae/data.hpp"
#include "scae/graph.hpp"
#include "scae/network_spec.hpp"
#include "scae/optim.hpp"

namespace scae {

// Binary layout, all integers little-endian:
//   "SCAE" | u32 version | u32 spec_len | spec text (canonical key=value)
//   u32 tensor_count | tensor records
//   u8 has_optimizer [ u64 step | f64 beta1 | f64 beta2 | f64 eps | u32 count | records ]
// Tensor record: u32 name_len | name (UTF-8) | u32 rank | u32 dims[rank] | u8 dtype | payload.
// Normalization statistics, when present, are stored as f64 tensors `norm.mean` / `norm.std`.
// Optimizer moments are stored as `m/<param>` and `v/<param>`.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkSpec spec;
  ParameterStore<float> params;
  std::optional<NormalizationStats> stats;
  std::optional<AdamState<float>> optimizer;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on bad magic, unsupported version, truncation, trailing bytes, implausible
// dimensions, or parameters that do not match the embedded spec.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scae
