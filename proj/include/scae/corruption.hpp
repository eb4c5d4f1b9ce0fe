#pragma once

#include <string>
#include <string_view>

#include "scae/rng.hpp"
#include "scae/tensor.hpp"

namespace scae {

enum class CorruptionKind { none, gaussian, block_mask };

// Corruption applied to raw [0,255] pixels before normalization.
//   gaussian:   x + N(0, sigma^2) per pixel and channel, no clipping.
//   block_mask: num_blocks axis-aligned block_h x block_w rectangles per image, placed
//               independently and uniformly (overlap allowed), zeroed across all channels.
// Each image is corrupted with probability apply_probability (1 = always).
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::none;
  double sigma = 0.0;
  int num_blocks = 4;
  int block_h = 0;
  int block_w = 0;
  double apply_probability = 1.0;

  static CorruptionSpec none() { return {}; }
  static CorruptionSpec gaussian(double sigma);
  static CorruptionSpec block_mask(int num_blocks, int block_h, int block_w);
  // Four blocks with side ceil(min(H, W) / 4).
  static CorruptionSpec default_block_mask(int height, int width);

  // Block dimensions of 0 replaced by the default side for this image size.
  CorruptionSpec resolved(int height, int width) const;
  void validate(int height, int width) const;

  // `none`, `gaussian:<sigma>`, `block:<count>:<h>:<w>` (block sizes of 0 take the default).
  std::string to_text() const;
  static CorruptionSpec parse(std::string_view text);

  bool operator==(const CorruptionSpec&) const = default;
};

struct Corrupted {
  Tensor noisy;
  // 0 inside dropped blocks, 1 elsewhere; all ones for Gaussian noise. Diagnostic only.
  Tensor mask;
};

// Pure in (batch, spec, rng state).
Corrupted corrupt(const Tensor& batch, const CorruptionSpec& spec, Rng& rng);

// Seed used for the corruption of global batch `batch_index`: run_seed XOR batch_index.
std::uint64_t corruption_seed(std::uint64_t run_seed, std::uint64_t batch_index);

inline constexpr double kPsnrCapDb = 99.0;

// PSNR of an image corrupted by unclipped Gaussian noise of this sigma: 20 log10(255 / sigma),
// capped at 99 dB.
double expected_corrupted_psnr(double sigma);

}  // namespace scae
