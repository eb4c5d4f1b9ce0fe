#include "scae/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "scae/kv.hpp"

namespace scae {

CorruptionSpec CorruptionSpec::gaussian(double sigma) {
  CorruptionSpec s;
  s.kind = CorruptionKind::gaussian;
  s.sigma = sigma;
  return s;
}

CorruptionSpec CorruptionSpec::block_mask(int num_blocks, int block_h, int block_w) {
  CorruptionSpec s;
  s.kind = CorruptionKind::block_mask;
  s.num_blocks = num_blocks;
  s.block_h = block_h;
  s.block_w = block_w;
  return s;
}

CorruptionSpec CorruptionSpec::default_block_mask(int height, int width) {
  const int side = (std::min(height, width) + 3) / 4;
  return block_mask(4, side, side);
}

CorruptionSpec CorruptionSpec::resolved(int height, int width) const {
  CorruptionSpec out = *this;
  if (kind == CorruptionKind::block_mask) {
    const int side = (std::min(height, width) + 3) / 4;
    if (out.block_h == 0) out.block_h = side;
    if (out.block_w == 0) out.block_w = side;
  }
  return out;
}

void CorruptionSpec::validate(int height, int width) const {
  if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
    throw ContractError("corruption: apply probability must lie in [0, 1]");
  }
  switch (kind) {
    case CorruptionKind::none: break;
    case CorruptionKind::gaussian:
      if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ContractError("corruption: sigma must be >= 0");
      break;
    case CorruptionKind::block_mask:
      if (num_blocks < 0) throw ContractError("corruption: num_blocks must be >= 0");
      if (block_h < 1 || block_w < 1) throw ContractError("corruption: block dimensions must be positive");
      if (block_h > height || block_w > width) {
        throw ContractError("corruption: block " + std::to_string(block_h) + "x" + std::to_string(block_w) +
                            " larger than image " + std::to_string(height) + "x" + std::to_string(width));
      }
      break;
  }
}

std::string CorruptionSpec::to_text() const {
  switch (kind) {
    case CorruptionKind::none: return "none";
    case CorruptionKind::gaussian: return "gaussian:" + format_double(sigma);
    case CorruptionKind::block_mask:
      return "block:" + std::to_string(num_blocks) + ":" + std::to_string(block_h) + ":" + std::to_string(block_w);
  }
  return "none";
}

CorruptionSpec CorruptionSpec::parse(std::string_view text) {
  const auto f = split(text, ':');
  if (f[0] == "none" && f.size() == 1) return none();
  if (f[0] == "gaussian" && f.size() == 2) return gaussian(parse_double(f[1], "noise"));
  if (f[0] == "block" && (f.size() == 2 || f.size() == 4)) {
    const int count = static_cast<int>(parse_int(f[1], "noise"));
    if (f.size() == 2) return block_mask(count, 0, 0);
    return block_mask(count, static_cast<int>(parse_int(f[2], "noise")), static_cast<int>(parse_int(f[3], "noise")));
  }
  throw ContractError("noise: expected none, gaussian:<sigma> or block:<count>[:<h>:<w>], got '" + std::string(text) +
                      "'");
}

Corrupted corrupt(const Tensor& batch, const CorruptionSpec& requested, Rng& rng) {
  if (batch.shape().rank() != 4) throw ContractError("corrupt: expected (N,C,H,W)");
  const std::size_t n = batch.shape()[0], c = batch.shape()[1], h = batch.shape()[2], w = batch.shape()[3];
  const CorruptionSpec spec = requested.resolved(static_cast<int>(h), static_cast<int>(w));
  spec.validate(static_cast<int>(h), static_cast<int>(w));

  Corrupted out{batch, full<float>(batch.shape(), 1.0f)};
  for (std::size_t i = 0; i < n; ++i) {
    if (spec.kind == CorruptionKind::none) break;
    if (spec.apply_probability < 1.0 && !rng.bernoulli(spec.apply_probability)) continue;
    if (spec.kind == CorruptionKind::gaussian) {
      float* p = out.noisy.data() + i * c * h * w;
      for (std::size_t k = 0; k < c * h * w; ++k) p[k] = static_cast<float>(p[k] + spec.sigma * rng.normal());
    } else {
      const auto bh = static_cast<std::size_t>(spec.block_h), bw = static_cast<std::size_t>(spec.block_w);
      for (int b = 0; b < spec.num_blocks; ++b) {
        const std::size_t top = rng.uniform_int(h - bh + 1), left = rng.uniform_int(w - bw + 1);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = top; y < top + bh; ++y)
            for (std::size_t x = left; x < left + bw; ++x) {
              out.noisy.at(i, ch, y, x) = 0.0f;
              out.mask.at(i, ch, y, x) = 0.0f;
            }
      }
    }
  }
  check_finite(out.noisy, "corrupted batch");
  return out;
}

std::uint64_t corruption_seed(std::uint64_t run_seed, std::uint64_t batch_index) { return run_seed ^ batch_index; }

double expected_corrupted_psnr(double sigma) {
  if (!(sigma >= 0.0)) throw ContractError("expected_corrupted_psnr: sigma must be >= 0");
  if (sigma == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 20.0 * std::log10(255.0 / sigma));
}

}  // namespace scae
