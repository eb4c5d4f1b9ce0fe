#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace scae {

struct StageSpec {
  int layers = 0;
  int width = 0;
  // First layer of the stage uses stride 2.
  bool downsample = false;

  bool operator==(const StageSpec&) const = default;
};

enum class HeadKind { autoencoder, classifier, none };

std::string to_string(HeadKind head);
HeadKind parse_head(std::string_view text);

// Geometry of one encoder convolution, 1-based `index` over the whole encoder.
struct LayerGeometry {
  int index = 0;
  std::size_t in_channels = 0, out_channels = 0;
  std::size_t stride = 1, pad = 1, kernel = 3;
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

// Declarative description of the symmetric encoder/decoder (or the encoder plus a
// classification head). Encoder layer i is conv -> BN -> ReLU; the decoder mirrors it with
// transposed convolutions. With shortcut_spacing = s > 0, the convolution output of every
// encoder layer whose index is a multiple of s (excluding the last encoder layer) is added to
// the decoder stream at the mirrored position.
struct NetworkSpec {
  std::vector<StageSpec> stages;
  int shortcut_spacing = 2;
  bool input_output_shortcut = true;
  int in_channels = 3;
  int in_height = 29;
  int in_width = 29;
  int kernel = 3;
  HeadKind head = HeadKind::autoencoder;
  int num_classes = 0;

  bool operator==(const NetworkSpec&) const = default;

  int encoder_depth() const;
  std::vector<LayerGeometry> encoder_layers() const;
  // 1-based encoder layer indices whose conv output feeds a decoder shortcut.
  std::vector<int> shortcut_sources() const;

  // Throws ContractError naming the offending field.
  void validate() const;

  // Canonical `key=value` form: sorted keys, LF endings.
  std::string to_text() const;
  static NetworkSpec from_text(std::string_view text);

  NetworkSpec with_head(HeadKind kind, int classes = 0) const;
};

// Stage counts with one shared width; the first non-empty stage keeps full resolution,
// every later stage downsamples at its first layer.
NetworkSpec spec_from_stage_counts(const std::vector<int>& counts, int width, int channels, int height, int width_px);

// m = (5,5,5,0), n = 128 on 3x29x29 crops.
NetworkSpec network1_cifar(int width = 128);
// m = (2,2,3,3), n = 64 on 3x89x89 crops.
NetworkSpec network1_stl10(int width = 64);

}  // namespace scae
