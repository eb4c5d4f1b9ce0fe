#include "scae/network_spec.hpp"

#include "scae/errors.hpp"
#include "scae/kv.hpp"
#include "scae/nn_ops.hpp"

namespace scae {

std::string to_string(HeadKind head) {
  switch (head) {
    case HeadKind::autoencoder: return "autoencoder";
    case HeadKind::classifier: return "classifier";
    case HeadKind::none: return "none";
  }
  return "none";
}

HeadKind parse_head(std::string_view text) {
  if (text == "autoencoder") return HeadKind::autoencoder;
  if (text == "classifier") return HeadKind::classifier;
  if (text == "none") return HeadKind::none;
  throw ContractError("unknown head '" + std::string(text) + "'");
}

int NetworkSpec::encoder_depth() const {
  int depth = 0;
  for (const auto& s : stages) depth += s.layers;
  return depth;
}

std::vector<LayerGeometry> NetworkSpec::encoder_layers() const {
  std::vector<LayerGeometry> layers;
  std::size_t channels = static_cast<std::size_t>(in_channels);
  std::size_t h = static_cast<std::size_t>(in_height), w = static_cast<std::size_t>(in_width);
  int index = 0;
  for (const auto& stage : stages) {
    for (int l = 0; l < stage.layers; ++l) {
      LayerGeometry g;
      g.index = ++index;
      g.in_channels = channels;
      g.out_channels = static_cast<std::size_t>(stage.width);
      g.kernel = static_cast<std::size_t>(kernel);
      g.pad = g.kernel / 2;
      g.stride = (stage.downsample && l == 0) ? 2 : 1;
      g.in_h = h;
      g.in_w = w;
      g.out_h = conv_output_size(h, g.kernel, g.stride, g.pad);
      g.out_w = conv_output_size(w, g.kernel, g.stride, g.pad);
      layers.push_back(g);
      channels = g.out_channels;
      h = g.out_h;
      w = g.out_w;
    }
  }
  return layers;
}

std::vector<int> NetworkSpec::shortcut_sources() const {
  std::vector<int> sources;
  if (shortcut_spacing <= 0) return sources;
  const int depth = encoder_depth();
  for (int i = shortcut_spacing; i < depth; i += shortcut_spacing) sources.push_back(i);
  return sources;
}

void NetworkSpec::validate() const {
  if (stages.empty()) throw ContractError("network: stages must not be empty");
  for (const auto& s : stages) {
    if (s.layers < 0) throw ContractError("network: stage layer count must be >= 0");
    if (s.width < 1) throw ContractError("network: stage width must be >= 1");
  }
  if (encoder_depth() == 0) throw ContractError("network: zero-layer spec");
  if (in_channels < 1 || in_height < 1 || in_width < 1) throw ContractError("network: input shape must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw ContractError("network: kernel must be odd");
  if (shortcut_spacing < 0) throw ContractError("network: shortcut_spacing must be >= 0");
  if (head == HeadKind::classifier && num_classes < 2) throw ContractError("network: classifier needs num_classes >= 2");
  if (head != HeadKind::classifier && num_classes != 0) {
    throw ContractError("network: num_classes is only valid for the classifier head");
  }

  std::vector<LayerGeometry> layers;
  try {
    layers = encoder_layers();
  } catch (const ContractError& e) {
    throw ContractError(std::string("network: invalid encoder geometry: ") + e.what());
  }
  if (head == HeadKind::autoencoder) {
    for (const auto& g : layers) {
      const auto back_h = deconv_output_size(g.out_h, g.kernel, g.stride, g.pad);
      const auto back_w = deconv_output_size(g.out_w, g.kernel, g.stride, g.pad);
      if (back_h != g.in_h || back_w != g.in_w) {
        throw ContractError("network: encoder layer " + std::to_string(g.index) + " maps " + std::to_string(g.in_h) +
                            "x" + std::to_string(g.in_w) + " to " + std::to_string(g.out_h) + "x" +
                            std::to_string(g.out_w) + ", which the mirrored deconvolution cannot invert " +
                            "(stride-2 layers need odd input sizes)");
      }
    }
  }
}

std::string NetworkSpec::to_text() const {
  KeyValues kv;
  kv["head"] = to_string(head);
  kv["input"] = std::to_string(in_channels) + "x" + std::to_string(in_height) + "x" + std::to_string(in_width);
  kv["input_output_shortcut"] = input_output_shortcut ? "1" : "0";
  kv["kernel"] = std::to_string(kernel);
  kv["num_classes"] = std::to_string(num_classes);
  kv["shortcut_spacing"] = std::to_string(shortcut_spacing);
  std::string st;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) st += ',';
    st += std::to_string(stages[i].layers) + ":" + std::to_string(stages[i].width) + ":" +
          (stages[i].downsample ? "1" : "0");
  }
  kv["stages"] = st;
  return format_key_values(kv);
}

NetworkSpec NetworkSpec::from_text(std::string_view text) {
  const auto kv = parse_key_values(text);
  const auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ContractError(std::string("network spec: missing key '") + key + "'");
    return it->second;
  };
  for (const auto& [k, v] : kv) {
    if (k != "head" && k != "input" && k != "input_output_shortcut" && k != "kernel" && k != "num_classes" &&
        k != "shortcut_spacing" && k != "stages") {
      throw ContractError("network spec: unknown key '" + k + "'");
    }
  }
  NetworkSpec spec;
  spec.head = parse_head(get("head"));
  const auto dims = split(get("input"), 'x');
  if (dims.size() != 3) throw ContractError("network spec: input must be CxHxW");
  spec.in_channels = static_cast<int>(parse_int(dims[0], "input"));
  spec.in_height = static_cast<int>(parse_int(dims[1], "input"));
  spec.in_width = static_cast<int>(parse_int(dims[2], "input"));
  spec.input_output_shortcut = parse_bool(get("input_output_shortcut"), "input_output_shortcut");
  spec.kernel = static_cast<int>(parse_int(get("kernel"), "kernel"));
  spec.num_classes = static_cast<int>(parse_int(get("num_classes"), "num_classes"));
  spec.shortcut_spacing = static_cast<int>(parse_int(get("shortcut_spacing"), "shortcut_spacing"));
  for (const auto& item : split(get("stages"), ',')) {
    const auto f = split(item, ':');
    if (f.size() != 3) throw ContractError("network spec: stage must be layers:width:downsample, got '" + item + "'");
    spec.stages.push_back({static_cast<int>(parse_int(f[0], "stages")), static_cast<int>(parse_int(f[1], "stages")),
                           parse_bool(f[2], "stages")});
  }
  spec.validate();
  return spec;
}

NetworkSpec NetworkSpec::with_head(HeadKind kind, int classes) const {
  NetworkSpec out = *this;
  out.head = kind;
  out.num_classes = kind == HeadKind::classifier ? classes : 0;
  return out;
}

NetworkSpec spec_from_stage_counts(const std::vector<int>& counts, int width, int channels, int height, int width_px) {
  NetworkSpec spec;
  bool seen = false;
  for (int m : counts) {
    spec.stages.push_back({m, width, seen});
    seen = seen || m > 0;
  }
  spec.in_channels = channels;
  spec.in_height = height;
  spec.in_width = width_px;
  return spec;
}

NetworkSpec network1_cifar(int width) { return spec_from_stage_counts({5, 5, 5, 0}, width, 3, 29, 29); }

NetworkSpec network1_stl10(int width) { return spec_from_stage_counts({2, 2, 3, 3}, width, 3, 89, 89); }

}  // namespace scae
