#pragma once

#include <string>
#include <vector>

#include "scae/graph.hpp"
#include "scae/network_spec.hpp"

namespace scae {

class Rng;

inline constexpr double kInitStd = 0.01;

template <typename T>
struct Network {
  NetworkSpec spec;
  Graph graph;
  ParameterStore<T> params;
};

// Dataflow of `spec`, without parameter values. Encoder layer i produces activations
// `enc<i>.conv`, `enc<i>.bn`, `enc<i>.relu`. For the autoencoder head the decoder runs
// `dec<L>.deconv` ... `dec1.deconv`; before each `dec<i>.bn` (i >= 2) the shortcut source
// `enc<i-1>.conv` is added as `dec<i>.add` when that layer is a shortcut source. With the
// input->output shortcut the final activation is `output = dec1.deconv + input`.
// The classifier head appends `head.gap` and `head.fc` (logits).
Graph build_graph(const NetworkSpec& spec);

struct AutoencoderOptions {
  double init_std = kInitStd;
  // Zero every conv/deconv weight and bias, leaving only the identity shortcut active.
  bool zero_residual = false;
};

template <typename T>
Network<T> build_autoencoder(const NetworkSpec& spec, Rng& rng, const AutoencoderOptions& options = {});

// Encoder + global average pool + linear head. When `init` is given, every encoder parameter
// (weights, BN affine terms and running stats) is copied from it; the head stays fresh.
template <typename T>
Network<T> build_classifier(const NetworkSpec& spec, Rng& rng, const ParameterStore<T>* init = nullptr,
                            double init_std = kInitStd);

// Encoder-only graph (head = none) with parameters copied from `source`.
template <typename T>
Network<T> extract_encoder(const NetworkSpec& spec, const ParameterStore<T>& source);

// Names of all parameters that belong to the encoder (prefix `enc`).
std::vector<std::string> encoder_parameter_names(const NetworkSpec& spec);
FreezeSet encoder_freeze_set(const NetworkSpec& spec);

// Probe heads operate on a frozen feature map of per-sample shape `feature_shape`.
// Softmax regression on the flattened features.
Graph build_probe_classifier(const Shape& feature_shape, std::size_t num_classes);

// Stack of `depth` transposed convolutions; the first `upsample_steps` use stride 2 and the
// rest stride 1, intermediate layers carry `hidden_width` channels with ReLU in between, the
// last one emits `target[0]` channels. Throws if the result does not reach `target`.
Graph build_probe_reconstructor(const Shape& feature_shape, const Shape& target, std::size_t upsample_steps,
                                std::size_t depth, std::size_t hidden_width);

// Trainable element count of a reconstruction probe, for width matching.
std::size_t probe_reconstructor_size(std::size_t in_channels, std::size_t out_channels, std::size_t depth,
                                     std::size_t hidden_width, std::size_t kernel = 3);

}  // namespace scae
