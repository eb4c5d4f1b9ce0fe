#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "scae/nn_ops.hpp"
#include "scae/tensor.hpp"

namespace scae {

class Rng;

template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> value;
    bool trainable = true;
  };

  void add(std::string name, BasicTensor<T> value, bool trainable);
  bool contains(std::string_view name) const;
  BasicTensor<T>& get(std::string_view name);
  const BasicTensor<T>& get(std::string_view name) const;
  bool is_trainable(std::string_view name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Total element count, trainable entries only unless `include_buffers`.
  std::size_t element_count(bool include_buffers = false) const;

  template <typename To>
  ParameterStore<To> cast() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

using FreezeSet = std::set<std::string, std::less<>>;

enum class OpKind { conv, deconv, batchnorm, relu, add, global_avg_pool, linear };

const char* to_string(OpKind kind);

// One step of the dataflow. `name` is the produced activation and, for parametrized ops,
// the prefix of the owned parameters (`<name>.weight`, `<name>.gamma`, ...).
struct Node {
  OpKind kind = OpKind::relu;
  std::string name;
  std::vector<std::string> inputs;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

enum class ParamInit { gaussian, zeros, ones };

struct ParamInfo {
  std::string name;
  Shape shape;
  bool trainable = true;
  ParamInit init = ParamInit::gaussian;
};

// Topologically ordered op list plus the parameter layout and per-sample activation shapes
// (batch axis omitted) derived at construction.
class Graph {
 public:
  explicit Graph(Shape input_shape, std::string input_name = "input");

  const std::string& input_name() const { return input_name_; }
  const std::string& output_name() const { return output_name_; }
  void set_output(std::string name);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<ParamInfo>& params() const { return params_; }
  const Shape& shape_of(std::string_view activation) const;
  bool has_activation(std::string_view activation) const;
  // Names of ReLU activations in execution order.
  std::vector<std::string> relu_names() const;

  std::string conv(std::string name, const std::string& input, std::size_t out_channels, std::size_t kernel,
                   std::size_t stride, std::size_t pad);
  std::string deconv(std::string name, const std::string& input, std::size_t out_channels, std::size_t kernel,
                     std::size_t stride, std::size_t pad);
  std::string batchnorm(std::string name, const std::string& input);
  std::string relu(std::string name, const std::string& input);
  std::string add(std::string name, const std::string& a, const std::string& b);
  std::string global_avg_pool(std::string name, const std::string& input);
  std::string linear(std::string name, const std::string& input, std::size_t out_features);

  // Fresh parameters: gaussian entries ~ N(0, init_std^2) drawn in layout order.
  template <typename T>
  ParameterStore<T> init_parameters(Rng& rng, double init_std) const;

  // Throws FormatError unless `store` holds exactly this graph's parameters with matching shapes.
  template <typename T>
  void check_store(const ParameterStore<T>& store) const;

 private:
  const Node& push(Node node, Shape shape);
  void add_param(std::string name, Shape shape, bool trainable, ParamInit init);

  std::string input_name_;
  std::string output_name_;
  std::vector<Node> nodes_;
  std::vector<ParamInfo> params_;
  std::map<std::string, Shape, std::less<>> shapes_;
};

template <typename T>
struct ForwardResult {
  std::map<std::string, BasicTensor<T>, std::less<>> activations;
  std::map<std::string, BatchNormCache<T>, std::less<>> bn_caches;
  std::string output_name;

  const BasicTensor<T>& output() const { return activations.at(output_name); }
  const BasicTensor<T>& at(std::string_view name) const;
};

// Executes the graph in order. Train mode uses batch statistics and updates BN running stats
// in `params`, except for BN layers whose gamma is frozen, which run in infer mode.
template <typename T>
ForwardResult<T> forward(const Graph& graph, ParameterStore<T>& params, const BasicTensor<T>& input, BnMode mode,
                         const FreezeSet& frozen = {});

struct BackwardOptions {
  FreezeSet frozen;
  bool input_grad = false;
};

template <typename T>
struct Gradients {
  // One entry per trainable parameter, in store order; frozen parameters get zeros.
  ParameterStore<T> params;
  BasicTensor<T> input;
};

// Reverse sweep; activations consumed by several nodes accumulate the sum of their
// consumers' gradients.
template <typename T>
Gradients<T> backward(const Graph& graph, const ParameterStore<T>& params, const ForwardResult<T>& fwd,
                      const BasicTensor<T>& grad_output, const BackwardOptions& options = {});

}  // namespace scae
