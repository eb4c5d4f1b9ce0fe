#include "scae/network.hpp"

#include "scae/rng.hpp"

namespace scae {

namespace {

std::string enc(int i, const char* part) { return "enc" + std::to_string(i) + "." + part; }
std::string dec(int i, const char* part) { return "dec" + std::to_string(i) + "." + part; }

// Builds the encoder chain and returns the conv-output activation names (1-based).
std::vector<std::string> add_encoder(Graph& g, const NetworkSpec& spec) {
  std::vector<std::string> conv_out(1);
  std::string current = g.input_name();
  for (const auto& layer : spec.encoder_layers()) {
    const int i = layer.index;
    const auto h = g.conv(enc(i, "conv"), current, layer.out_channels, layer.kernel, layer.stride, layer.pad);
    conv_out.push_back(h);
    const auto b = g.batchnorm(enc(i, "bn"), h);
    current = g.relu(enc(i, "relu"), b);
  }
  return conv_out;
}

void add_decoder(Graph& g, const NetworkSpec& spec, const std::vector<std::string>& conv_out) {
  const auto layers = spec.encoder_layers();
  const auto sources = spec.shortcut_sources();
  const auto is_source = [&](int i) {
    for (int s : sources)
      if (s == i) return true;
    return false;
  };

  std::string current = g.output_name();  // enc<L>.relu
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    const auto& layer = *it;
    const int i = layer.index;
    current = g.deconv(dec(i, "deconv"), current, layer.in_channels, layer.kernel, layer.stride, layer.pad);
    if (i == 1) break;
    if (is_source(i - 1)) current = g.add(dec(i, "add"), current, conv_out[static_cast<std::size_t>(i - 1)]);
    current = g.batchnorm(dec(i, "bn"), current);
    current = g.relu(dec(i, "relu"), current);
  }
  if (spec.input_output_shortcut) current = g.add("output", current, g.input_name());
  g.set_output(current);
}

Shape input_shape(const NetworkSpec& spec) {
  return Shape{static_cast<std::size_t>(spec.in_channels), static_cast<std::size_t>(spec.in_height),
               static_cast<std::size_t>(spec.in_width)};
}

bool is_encoder_name(const std::string& name) { return name.rfind("enc", 0) == 0; }

}  // namespace

Graph build_graph(const NetworkSpec& spec) {
  spec.validate();
  Graph g(input_shape(spec));
  const auto conv_out = add_encoder(g, spec);
  switch (spec.head) {
    case HeadKind::autoencoder: add_decoder(g, spec, conv_out); break;
    case HeadKind::classifier: {
      const auto pooled = g.global_avg_pool("head.gap", g.output_name());
      g.linear("head.fc", pooled, static_cast<std::size_t>(spec.num_classes));
      break;
    }
    case HeadKind::none: break;
  }
  return g;
}

template <typename T>
Network<T> build_autoencoder(const NetworkSpec& spec, Rng& rng, const AutoencoderOptions& options) {
  if (spec.head != HeadKind::autoencoder) throw ContractError("build_autoencoder: spec head must be autoencoder");
  Graph graph = build_graph(spec);
  auto params = graph.init_parameters<T>(rng, options.init_std);
  if (options.zero_residual) {
    for (const auto& node : graph.nodes()) {
      if (node.kind == OpKind::conv || node.kind == OpKind::deconv) {
        params.get(node.name + ".weight") = zeros<T>(params.get(node.name + ".weight").shape());
        params.get(node.name + ".bias") = zeros<T>(params.get(node.name + ".bias").shape());
      }
    }
  }
  return {spec, std::move(graph), std::move(params)};
}

template <typename T>
Network<T> build_classifier(const NetworkSpec& spec, Rng& rng, const ParameterStore<T>* init, double init_std) {
  if (spec.head != HeadKind::classifier) throw ContractError("build_classifier: spec head must be classifier");
  Graph graph = build_graph(spec);
  auto params = graph.init_parameters<T>(rng, init_std);
  if (init) {
    for (auto& e : params.entries()) {
      if (!is_encoder_name(e.name)) continue;
      if (!init->contains(e.name)) throw FormatError("initial parameters lack encoder tensor '" + e.name + "'");
      const auto& src = init->get(e.name);
      if (!(src.shape() == e.value.shape())) {
        throw FormatError("encoder tensor '" + e.name + "' has shape " + src.shape().str() + ", expected " +
                          e.value.shape().str());
      }
      e.value = src;
    }
  }
  return {spec, std::move(graph), std::move(params)};
}

template <typename T>
Network<T> extract_encoder(const NetworkSpec& spec, const ParameterStore<T>& source) {
  const NetworkSpec enc_spec = spec.with_head(HeadKind::none);
  Graph graph = build_graph(enc_spec);
  ParameterStore<T> params;
  for (const auto& p : graph.params()) {
    if (!source.contains(p.name)) throw FormatError("source parameters lack encoder tensor '" + p.name + "'");
    const auto& src = source.get(p.name);
    if (!(src.shape() == p.shape)) throw FormatError("encoder tensor '" + p.name + "' has the wrong shape");
    params.add(p.name, src, p.trainable);
  }
  return {enc_spec, std::move(graph), std::move(params)};
}

std::vector<std::string> encoder_parameter_names(const NetworkSpec& spec) {
  std::vector<std::string> names;
  const Graph g = build_graph(spec.with_head(HeadKind::none));
  for (const auto& p : g.params()) names.push_back(p.name);
  return names;
}

FreezeSet encoder_freeze_set(const NetworkSpec& spec) {
  const auto names = encoder_parameter_names(spec);
  return FreezeSet(names.begin(), names.end());
}

Graph build_probe_classifier(const Shape& feature_shape, std::size_t num_classes) {
  Graph g(feature_shape, "features");
  g.linear("probe.fc", "features", num_classes);
  return g;
}

Graph build_probe_reconstructor(const Shape& feature_shape, const Shape& target, std::size_t upsample_steps,
                                std::size_t depth, std::size_t hidden_width) {
  if (depth < 1 || upsample_steps > depth) throw ContractError("probe reconstructor: invalid depth");
  Graph g(feature_shape, "features");
  std::string current = "features";
  for (std::size_t l = 0; l < depth; ++l) {
    const bool last = l + 1 == depth;
    const std::size_t stride = l < upsample_steps ? 2 : 1;
    const std::string name = "probe.deconv" + std::to_string(l + 1);
    current = g.deconv(name, current, last ? target[0] : hidden_width, 3, stride, 1);
    if (!last) current = g.relu("probe.relu" + std::to_string(l + 1), current);
  }
  if (!(g.shape_of(current) == target)) {
    throw ContractError("probe reconstructor: output " + g.shape_of(current).str() + " does not reach " + target.str());
  }
  return g;
}

std::size_t probe_reconstructor_size(std::size_t in_channels, std::size_t out_channels, std::size_t depth,
                                     std::size_t hidden_width, std::size_t kernel) {
  const std::size_t k2 = kernel * kernel;
  if (depth == 1) return in_channels * out_channels * k2 + out_channels;
  std::size_t n = in_channels * hidden_width * k2 + hidden_width;
  n += (depth - 2) * (hidden_width * hidden_width * k2 + hidden_width);
  n += hidden_width * out_channels * k2 + out_channels;
  return n;
}

template Network<float> build_autoencoder<float>(const NetworkSpec&, Rng&, const AutoencoderOptions&);
template Network<double> build_autoencoder<double>(const NetworkSpec&, Rng&, const AutoencoderOptions&);
template Network<float> build_classifier<float>(const NetworkSpec&, Rng&, const ParameterStore<float>*, double);
template Network<double> build_classifier<double>(const NetworkSpec&, Rng&, const ParameterStore<double>*, double);
template Network<float> extract_encoder<float>(const NetworkSpec&, const ParameterStore<float>&);
template Network<double> extract_encoder<double>(const NetworkSpec&, const ParameterStore<double>&);

}  // namespace scae
