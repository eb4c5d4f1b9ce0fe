#include "scae/graph.hpp"

#include "scae/rng.hpp"

namespace scae {

// ---------------------------------------------------------------------------------------------
// ParameterStore

template <typename T>
void ParameterStore<T>::add(std::string name, BasicTensor<T> value, bool trainable) {
  if (index_.contains(name)) throw ContractError("parameter '" + name + "' already exists");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value), trainable});
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

template <typename T>
BasicTensor<T>& ParameterStore<T>::get(std::string_view name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].value;
}

template <typename T>
const BasicTensor<T>& ParameterStore<T>::get(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].value;
}

template <typename T>
bool ParameterStore<T>::is_trainable(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].trainable;
}

template <typename T>
std::size_t ParameterStore<T>::element_count(bool include_buffers) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable || include_buffers) n += e.value.size();
  return n;
}

template <typename T>
template <typename To>
ParameterStore<To> ParameterStore<T>::cast() const {
  ParameterStore<To> out;
  for (const auto& e : entries_) out.add(e.name, scae::cast<To>(e.value), e.trainable);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Graph construction

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::conv: return "conv";
    case OpKind::deconv: return "deconv";
    case OpKind::batchnorm: return "batchnorm";
    case OpKind::relu: return "relu";
    case OpKind::add: return "add";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::linear: return "linear";
  }
  return "?";
}

Graph::Graph(Shape input_shape, std::string input_name) : input_name_(std::move(input_name)) {
  shapes_.emplace(input_name_, input_shape);
  output_name_ = input_name_;
}

void Graph::set_output(std::string name) {
  if (!has_activation(name)) throw ContractError("graph: unknown output activation '" + name + "'");
  output_name_ = std::move(name);
}

const Shape& Graph::shape_of(std::string_view activation) const {
  const auto it = shapes_.find(activation);
  if (it == shapes_.end()) throw ContractError("graph: unknown activation '" + std::string(activation) + "'");
  return it->second;
}

bool Graph::has_activation(std::string_view activation) const { return shapes_.find(activation) != shapes_.end(); }

std::vector<std::string> Graph::relu_names() const {
  std::vector<std::string> names;
  for (const auto& n : nodes_)
    if (n.kind == OpKind::relu) names.push_back(n.name);
  return names;
}

const Node& Graph::push(Node node, Shape shape) {
  if (has_activation(node.name)) throw ContractError("graph: duplicate activation '" + node.name + "'");
  for (const auto& in : node.inputs) shape_of(in);
  shapes_.emplace(node.name, shape);
  nodes_.push_back(std::move(node));
  output_name_ = nodes_.back().name;
  return nodes_.back();
}

void Graph::add_param(std::string name, Shape shape, bool trainable, ParamInit init) {
  for (const auto& p : params_)
    if (p.name == name) throw ContractError("graph: duplicate parameter '" + name + "'");
  params_.push_back({std::move(name), shape, trainable, init});
}

std::string Graph::conv(std::string name, const std::string& input, std::size_t out_channels, std::size_t kernel,
                        std::size_t stride, std::size_t pad) {
  const Shape& in = shape_of(input);
  if (in.rank() != 3) throw ContractError("graph: conv input must be (C,H,W)");
  const Shape out{out_channels, conv_output_size(in[1], kernel, stride, pad), conv_output_size(in[2], kernel, stride, pad)};
  add_param(name + ".weight", Shape{out_channels, in[0], kernel, kernel}, true, ParamInit::gaussian);
  add_param(name + ".bias", Shape{out_channels}, true, ParamInit::zeros);
  return push({OpKind::conv, name, {input}, stride, pad}, out).name;
}

std::string Graph::deconv(std::string name, const std::string& input, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride, std::size_t pad) {
  const Shape& in = shape_of(input);
  if (in.rank() != 3) throw ContractError("graph: deconv input must be (C,H,W)");
  const Shape out{out_channels, deconv_output_size(in[1], kernel, stride, pad),
                  deconv_output_size(in[2], kernel, stride, pad)};
  add_param(name + ".weight", Shape{in[0], out_channels, kernel, kernel}, true, ParamInit::gaussian);
  add_param(name + ".bias", Shape{out_channels}, true, ParamInit::zeros);
  return push({OpKind::deconv, name, {input}, stride, pad}, out).name;
}

std::string Graph::batchnorm(std::string name, const std::string& input) {
  const Shape in = shape_of(input);
  if (in.rank() != 3) throw ContractError("graph: batchnorm input must be (C,H,W)");
  add_param(name + ".gamma", Shape{in[0]}, true, ParamInit::ones);
  add_param(name + ".beta", Shape{in[0]}, true, ParamInit::zeros);
  add_param(name + ".running_mean", Shape{in[0]}, false, ParamInit::zeros);
  add_param(name + ".running_var", Shape{in[0]}, false, ParamInit::ones);
  return push({OpKind::batchnorm, name, {input}}, in).name;
}

std::string Graph::relu(std::string name, const std::string& input) {
  const Shape in = shape_of(input);
  return push({OpKind::relu, name, {input}}, in).name;
}

std::string Graph::add(std::string name, const std::string& a, const std::string& b) {
  const Shape sa = shape_of(a);
  require_same_shape(sa, shape_of(b), "graph add");
  return push({OpKind::add, name, {a, b}}, sa).name;
}

std::string Graph::global_avg_pool(std::string name, const std::string& input) {
  const Shape in = shape_of(input);
  if (in.rank() != 3) throw ContractError("graph: global_avg_pool input must be (C,H,W)");
  return push({OpKind::global_avg_pool, name, {input}}, Shape{in[0]}).name;
}

std::string Graph::linear(std::string name, const std::string& input, std::size_t out_features) {
  const std::size_t features = shape_of(input).numel();
  add_param(name + ".weight", Shape{out_features, features}, true, ParamInit::gaussian);
  add_param(name + ".bias", Shape{out_features}, true, ParamInit::zeros);
  return push({OpKind::linear, name, {input}}, Shape{out_features}).name;
}

template <typename T>
ParameterStore<T> Graph::init_parameters(Rng& rng, double init_std) const {
  ParameterStore<T> store;
  for (const auto& p : params_) {
    switch (p.init) {
      case ParamInit::gaussian: store.add(p.name, gaussian<T>(rng, p.shape, 0.0, init_std), p.trainable); break;
      case ParamInit::zeros: store.add(p.name, zeros<T>(p.shape), p.trainable); break;
      case ParamInit::ones: store.add(p.name, full<T>(p.shape, T{1}), p.trainable); break;
    }
  }
  return store;
}

template <typename T>
void Graph::check_store(const ParameterStore<T>& store) const {
  if (store.size() != params_.size()) {
    throw FormatError("parameter count mismatch: expected " + std::to_string(params_.size()) + ", got " +
                      std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& want = params_[i];
    const auto& have = store.entries()[i];
    if (have.name != want.name) {
      throw FormatError("parameter " + std::to_string(i) + ": expected '" + want.name + "', got '" + have.name + "'");
    }
    if (!(have.value.shape() == want.shape)) {
      throw FormatError("parameter '" + want.name + "': expected shape " + want.shape.str() + ", got " +
                        have.value.shape().str());
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Execution

template <typename T>
const BasicTensor<T>& ForwardResult<T>::at(std::string_view name) const {
  const auto it = activations.find(name);
  if (it == activations.end()) throw ContractError("no activation named '" + std::string(name) + "'");
  return it->second;
}

namespace {

template <typename T>
ConvParams<T> conv_params(const ParameterStore<T>& params, const Node& node) {
  return {params.get(node.name + ".weight"), params.get(node.name + ".bias"), node.stride, node.pad};
}

template <typename T>
BatchNormParams<T> bn_params(const ParameterStore<T>& params, const std::string& prefix) {
  BatchNormParams<T> p;
  p.gamma = params.get(prefix + ".gamma");
  p.beta = params.get(prefix + ".beta");
  p.running_mean = params.get(prefix + ".running_mean");
  p.running_var = params.get(prefix + ".running_var");
  p.has_running_stats = true;
  return p;
}

Shape with_batch(std::size_t n, const Shape& sample) {
  std::vector<std::size_t> dims{n};
  for (auto d : sample.dims()) dims.push_back(d);
  return Shape(std::span<const std::size_t>(dims));
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const Graph& graph, ParameterStore<T>& params, const BasicTensor<T>& input, BnMode mode,
                         const FreezeSet& frozen) {
  const Shape& in_shape = graph.shape_of(graph.input_name());
  if (input.shape().rank() != in_shape.rank() + 1 || !(input.shape() == with_batch(input.shape()[0], in_shape))) {
    throw ContractError("forward: input " + input.shape().str() + " does not match graph input " + in_shape.str());
  }
  const std::size_t batch = input.shape()[0];
  ForwardResult<T> result;
  result.output_name = graph.output_name();
  result.activations.emplace(graph.input_name(), input);
  for (const auto& node : graph.nodes()) {
    const auto& x = result.activations.at(node.inputs.front());
    BasicTensor<T> y;
    switch (node.kind) {
      case OpKind::conv: y = conv2d_forward(x, conv_params(params, node)); break;
      case OpKind::deconv: y = deconv2d_forward(x, conv_params(params, node)); break;
      case OpKind::batchnorm: {
        auto p = bn_params(params, node.name);
        const BnMode m = frozen.contains(node.name + ".gamma") ? BnMode::infer : mode;
        BatchNormCache<T> cache;
        y = batchnorm_forward(x, p, m, &cache);
        if (m == BnMode::train) {
          params.get(node.name + ".running_mean") = std::move(p.running_mean);
          params.get(node.name + ".running_var") = std::move(p.running_var);
        }
        result.bn_caches.emplace(node.name, std::move(cache));
        break;
      }
      case OpKind::relu: y = relu_forward(x); break;
      case OpKind::add: y = add(x, result.activations.at(node.inputs[1])); break;
      case OpKind::global_avg_pool: y = global_avg_pool_forward(x); break;
      case OpKind::linear:
        y = linear_forward(x, params.get(node.name + ".weight"), params.get(node.name + ".bias"));
        break;
    }
    const Shape expected = with_batch(batch, graph.shape_of(node.name));
    if (!(y.shape() == expected)) {
      throw ContractError("forward: node '" + node.name + "' produced " + y.shape().str() + ", expected " +
                          expected.str());
    }
    result.activations.emplace(node.name, std::move(y));
  }
  return result;
}

template <typename T>
Gradients<T> backward(const Graph& graph, const ParameterStore<T>& params, const ForwardResult<T>& fwd,
                      const BasicTensor<T>& grad_output, const BackwardOptions& options) {
  require_same_shape(grad_output.shape(), fwd.output().shape(), "backward");

  Gradients<T> grads;
  for (const auto& e : params.entries())
    if (e.trainable) grads.params.add(e.name, BasicTensor<T>(e.value.shape()), true);

  const auto trainable = [&](const std::string& name) {
    return params.is_trainable(name) && !options.frozen.contains(name);
  };

  // An activation needs a gradient if a trainable parameter (or the input, on request)
  // lies upstream of it.
  std::set<std::string, std::less<>> needs;
  if (options.input_grad) needs.insert(graph.input_name());
  for (const auto& node : graph.nodes()) {
    bool n = false;
    for (const auto& in : node.inputs) n = n || needs.contains(in);
    for (const auto& suffix : {".weight", ".bias", ".gamma", ".beta"}) {
      const std::string pname = node.name + suffix;
      if (params.contains(pname) && trainable(pname)) n = true;
    }
    if (n) needs.insert(node.name);
  }

  std::map<std::string, BasicTensor<T>, std::less<>> act_grads;
  act_grads.emplace(graph.output_name(), grad_output);
  const auto push_grad = [&](const std::string& name, BasicTensor<T>&& g) {
    if (!needs.contains(name)) return;
    auto it = act_grads.find(name);
    if (it == act_grads.end()) {
      act_grads.emplace(name, std::move(g));
    } else {
      accumulate(it->second, g);
    }
  };
  const auto store_param_grad = [&](const std::string& name, BasicTensor<T>&& g) {
    if (trainable(name)) grads.params.get(name) = std::move(g);
  };

  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const Node& node = *it;
    if (!needs.contains(node.name)) continue;
    const auto git = act_grads.find(node.name);
    if (git == act_grads.end()) continue;
    const BasicTensor<T> g = std::move(git->second);
    act_grads.erase(git);
    const std::string& in_name = node.inputs.front();
    const bool want_x = needs.contains(in_name);
    const auto& x = fwd.at(in_name);

    switch (node.kind) {
      case OpKind::conv:
      case OpKind::deconv: {
        const auto p = conv_params(params, node);
        auto cg = node.kind == OpKind::conv ? conv2d_backward(x, p, g, want_x) : deconv2d_backward(x, p, g, want_x);
        store_param_grad(node.name + ".weight", std::move(cg.grad_weight));
        store_param_grad(node.name + ".bias", std::move(cg.grad_bias));
        if (want_x) push_grad(in_name, std::move(cg.grad_x));
        break;
      }
      case OpKind::batchnorm: {
        const auto p = bn_params(params, node.name);
        auto bg = batchnorm_backward(fwd.bn_caches.at(node.name), p, g);
        store_param_grad(node.name + ".gamma", std::move(bg.grad_gamma));
        store_param_grad(node.name + ".beta", std::move(bg.grad_beta));
        if (want_x) push_grad(in_name, std::move(bg.grad_x));
        break;
      }
      case OpKind::relu:
        if (want_x) push_grad(in_name, relu_backward(x, g));
        break;
      case OpKind::add:
        if (needs.contains(node.inputs[1])) push_grad(node.inputs[1], BasicTensor<T>(g));
        if (want_x) push_grad(in_name, BasicTensor<T>(g));
        break;
      case OpKind::global_avg_pool:
        if (want_x) push_grad(in_name, global_avg_pool_backward(x.shape(), g));
        break;
      case OpKind::linear: {
        auto lg = linear_backward(x, params.get(node.name + ".weight"), g, want_x);
        store_param_grad(node.name + ".weight", std::move(lg.grad_weight));
        store_param_grad(node.name + ".bias", std::move(lg.grad_bias));
        if (want_x) push_grad(in_name, std::move(lg.grad_x));
        break;
      }
    }
  }

  if (options.input_grad) {
    const auto it = act_grads.find(graph.input_name());
    grads.input = it != act_grads.end() ? std::move(it->second) : BasicTensor<T>(fwd.at(graph.input_name()).shape());
  }
  return grads;
}

#define SCAE_INSTANTIATE(T)                                                                                    \
  template class ParameterStore<T>;                                                                            \
  template struct ForwardResult<T>;                                                                            \
  template ParameterStore<T> Graph::init_parameters<T>(Rng&, double) const;                                    \
  template void Graph::check_store<T>(const ParameterStore<T>&) const;                                         \
  template ForwardResult<T> forward<T>(const Graph&, ParameterStore<T>&, const BasicTensor<T>&, BnMode,        \
                                       const FreezeSet&);                                                      \
  template Gradients<T> backward<T>(const Graph&, const ParameterStore<T>&, const ForwardResult<T>&,           \
                                    const BasicTensor<T>&, const BackwardOptions&);

SCAE_INSTANTIATE(float)
SCAE_INSTANTIATE(double)
#undef SCAE_INSTANTIATE

template ParameterStore<double> ParameterStore<float>::cast<double>() const;
template ParameterStore<float> ParameterStore<double>::cast<float>() const;
template ParameterStore<float> ParameterStore<float>::cast<float>() const;
template ParameterStore<double> ParameterStore<double>::cast<double>() const;

}  // namespace scae
