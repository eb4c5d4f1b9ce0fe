#include <gtest/gtest.h>

#include "scae/network.hpp"
#include "scae/rng.hpp"
#include "support/grad_check.hpp"

using namespace scae;
using scae::testing::Eval;

namespace {

NetworkSpec toy_spec() {
  NetworkSpec s;
  s.stages = {{1, 3, false}, {2, 3, true}};
  s.in_channels = 2;
  s.in_height = 7;
  s.in_width = 7;
  s.shortcut_spacing = 1;
  return s;
}

// Loss = <output, proj>; the fingerprint covers the sign pattern of every ReLU input.
template <typename T>
Eval projected(const Graph& g, const ParameterStore<T>& params, const BasicTensor<T>& x, const BasicTensor<T>& proj,
               const FreezeSet& frozen = {}) {
  auto p = params;
  const auto fwd = forward(g, p, x, BnMode::train, frozen);
  std::uint64_t kinks = 0;
  for (const auto& node : g.nodes())
    if (node.kind == OpKind::relu) kinks = scae::testing::mask_hash(cast<double>(fwd.at(node.inputs[0])), kinks);
  return {dot(fwd.output(), proj), kinks};
}

// A bias followed by train-mode BN cancels out, so its gradient is exactly zero and finite
// differences only see roundoff.
bool cancelled_by_bn(const std::string& name) {
  return name.ends_with(".bias") && !name.starts_with("dec1.") && !name.starts_with("head.");
}

}  // namespace

TEST(NetworkSpec, TextRoundTrip) {
  NetworkSpec s = network1_cifar();
  const std::string text = s.to_text();
  EXPECT_EQ(NetworkSpec::from_text(text), s);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_LT(text.find("head="), text.find("stages="));  // sorted keys
  EXPECT_THROW(NetworkSpec::from_text("head=autoencoder\n"), ContractError);
  EXPECT_THROW(NetworkSpec::from_text(text + "extra=1\n"), ContractError);
}

TEST(NetworkSpec, Validation) {
  NetworkSpec s = toy_spec();
  EXPECT_NO_THROW(s.validate());
  NetworkSpec zero = s;
  zero.stages = {{0, 4, false}};
  EXPECT_THROW(zero.validate(), ContractError);
  NetworkSpec even = s;
  even.in_height = even.in_width = 8;  // 8 -> 4 -> 7 cannot be inverted
  EXPECT_THROW(even.validate(), ContractError);
  EXPECT_NO_THROW(even.with_head(HeadKind::classifier, 10).validate());
  EXPECT_THROW(s.with_head(HeadKind::classifier, 1).validate(), ContractError);
}

TEST(NetworkSpec, Network1Layout) {
  const NetworkSpec s = network1_cifar();
  EXPECT_EQ(s.encoder_depth(), 15);
  const auto layers = s.encoder_layers();
  EXPECT_EQ(layers[0].stride, 1u);
  EXPECT_EQ(layers[5].stride, 2u);
  EXPECT_EQ(layers[10].stride, 2u);
  EXPECT_EQ(layers[14].out_h, 8u);  // 29 -> 15 -> 8
  // Spacing 2 over 15 layers: sources 2, 4, ..., 14; the last layer carries none.
  EXPECT_EQ(s.shortcut_sources(), (std::vector<int>{2, 4, 6, 8, 10, 12, 14}));
  const NetworkSpec stl = network1_stl10();
  EXPECT_EQ(stl.encoder_depth(), 10);
  EXPECT_NO_THROW(stl.validate());
}

TEST(Network, Network1ShapeSymmetry) {
  const NetworkSpec spec = network1_cifar();
  const Graph g = build_graph(spec);
  std::size_t deconvs = 0, adds = 0;
  for (const auto& n : g.nodes()) {
    deconvs += n.kind == OpKind::deconv;
    adds += n.kind == OpKind::add;
  }
  EXPECT_EQ(deconvs, 15u);
  EXPECT_EQ(adds, 7u + 1u);
  EXPECT_EQ(g.shape_of(g.output_name()), Shape({3, 29, 29}));
  for (const auto& layer : spec.encoder_layers()) {
    const Shape in{layer.in_channels, layer.in_h, layer.in_w};
    EXPECT_EQ(g.shape_of("dec" + std::to_string(layer.index) + ".deconv"), in) << layer.index;
  }
}

TEST(Network, ParameterCountClosedForm) {
  NetworkSpec s;
  s.stages = {{2, 4, false}};
  s.in_channels = 1;
  s.in_height = s.in_width = 9;
  Rng r(1);
  const auto net = build_autoencoder<float>(s, r);
  // enc1 1->4, enc2 4->4, dec2 4->4, dec1 4->1 (3x3 kernels, with bias); BN on enc1, enc2, dec2.
  const std::size_t convs = (4 * 1 * 9 + 4) + (4 * 4 * 9 + 4) + (4 * 4 * 9 + 4) + (4 * 1 * 9 + 1);
  const std::size_t bn_affine = 3 * 2 * 4, bn_running = 3 * 2 * 4;
  EXPECT_EQ(net.params.element_count(), convs + bn_affine);
  EXPECT_EQ(net.params.element_count(true), convs + bn_affine + bn_running);
}

TEST(Network, InitializationContract) {
  Rng r(2);
  const auto net = build_autoencoder<double>(network1_cifar(32), r);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto& e : net.params.entries()) {
    const bool weight = e.name.ends_with(".weight");
    for (double v : e.value.values()) {
      if (weight) {
        s += v;
        s2 += v * v;
        ++n;
      } else if (e.name.ends_with(".bias") || e.name.ends_with(".beta") || e.name.ends_with(".running_mean")) {
        ASSERT_EQ(v, 0.0) << e.name;
      } else {
        ASSERT_EQ(v, 1.0) << e.name;
      }
    }
  }
  EXPECT_NEAR(s / n, 0.0, 1e-4);
  EXPECT_NEAR(std::sqrt(s2 / n), 0.01, 1e-4);
}

TEST(Network, BuildsAreDeterministic) {
  Rng a(7), b(7);
  const auto n1 = build_autoencoder<float>(toy_spec(), a);
  const auto n2 = build_autoencoder<float>(toy_spec(), b);
  ASSERT_EQ(n1.params.size(), n2.params.size());
  for (std::size_t i = 0; i < n1.params.size(); ++i) {
    EXPECT_EQ(n1.params.entries()[i].name, n2.params.entries()[i].name);
    EXPECT_TRUE(bitwise_equal(n1.params.entries()[i].value, n2.params.entries()[i].value));
  }
  Rng x(1);
  const Tensor in = gaussian<float>(x, Shape{2, 2, 7, 7}, 0.0, 1.0);
  auto p1 = n1.params, p2 = n2.params;
  const auto f1 = forward(n1.graph, p1, in, BnMode::train);
  const auto f2 = forward(n2.graph, p2, in, BnMode::train);
  for (const auto& [name, t] : f1.activations) EXPECT_TRUE(bitwise_equal(t, f2.at(name))) << name;
}

TEST(Network, ResidualIdentityAtZero) {
  Rng r(3);
  AutoencoderOptions o;
  o.zero_residual = true;
  auto net = build_autoencoder<float>(network1_cifar(16), r, o);
  Rng x(4);
  const Tensor in = gaussian<float>(x, Shape{2, 3, 29, 29}, 0.0, 1.0);
  EXPECT_TRUE(bitwise_equal(forward(net.graph, net.params, in, BnMode::train).output(), in));
  EXPECT_TRUE(bitwise_equal(forward(net.graph, net.params, Tensor(in.shape()), BnMode::train).output(),
                            Tensor(in.shape())));

  // With only the identity path active the input gradient is the output gradient.
  const Tensor go = gaussian<float>(x, in.shape(), 0.0, 1.0);
  const auto fwd = forward(net.graph, net.params, in, BnMode::train);
  BackwardOptions bo;
  bo.input_grad = true;
  EXPECT_TRUE(bitwise_equal(backward(net.graph, net.params, fwd, go, bo).input, go));
}

TEST(Network, OutputIsInputPlusResidual) {
  Rng r(5);
  auto net = build_autoencoder<double>(toy_spec(), r, {0.3, false});
  Rng x(6);
  const TensorD in = gaussian<double>(x, Shape{3, 2, 7, 7}, 0.0, 1.0);
  const auto fwd = forward(net.graph, net.params, in, BnMode::train);
  EXPECT_TRUE(bitwise_equal(fwd.output(), add(in, fwd.at("dec1.deconv"))));
}

TEST(Network, ShortcutWiring) {
  const Graph g = build_graph(toy_spec());
  const auto& nodes = g.nodes();
  const auto find = [&](const std::string& name) -> const Node& {
    for (const auto& n : nodes)
      if (n.name == name) return n;
    throw std::runtime_error("missing " + name);
  };
  EXPECT_EQ(find("dec3.add").inputs, (std::vector<std::string>{"dec3.deconv", "enc2.conv"}));
  EXPECT_EQ(find("dec2.add").inputs, (std::vector<std::string>{"dec2.deconv", "enc1.conv"}));
  EXPECT_EQ(find("dec3.bn").inputs, (std::vector<std::string>{"dec3.add"}));
  EXPECT_EQ(find("output").inputs, (std::vector<std::string>{"dec1.deconv", "input"}));
  EXPECT_EQ(g.relu_names(), (std::vector<std::string>{"enc1.relu", "enc2.relu", "enc3.relu", "dec3.relu", "dec2.relu"}));

  NetworkSpec plain = toy_spec();
  plain.shortcut_spacing = 0;
  plain.input_output_shortcut = false;
  const Graph pg = build_graph(plain);
  for (const auto& n : pg.nodes()) EXPECT_NE(n.kind, OpKind::add);
}

TEST(Network, ToyFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng r(100 + seed);
    auto net = build_autoencoder<double>(toy_spec(), r, {0.4, false});
    Rng x(200 + seed);
    TensorD in = gaussian<double>(x, Shape{3, 2, 7, 7}, 0.0, 1.0);
    const TensorD proj = gaussian<double>(x, in.shape(), 0.0, 1.0);
    auto p = net.params;
    const auto fwd = forward(net.graph, p, in, BnMode::train);
    BackwardOptions bo;
    bo.input_grad = true;
    const auto grads = backward(net.graph, net.params, fwd, proj, bo);

    const auto loss = [&] { return projected(net.graph, net.params, in, proj); };
    std::vector<std::string> names;
    for (const auto& e : grads.params.entries()) names.push_back(e.name);
    std::size_t checked = 0;
    for (int k = 0; k < 30; ++k) {
      const auto& name = names[x.uniform_int(names.size())];
      auto& t = net.params.get(name);
      if (cancelled_by_bn(name)) {
        for (double v : grads.params.get(name).values()) EXPECT_LT(std::abs(v), 1e-10) << name;
        continue;
      }
      const std::vector<std::size_t> idx{x.uniform_int(t.size())};
      const auto res = scae::testing::check_entries(t, grads.params.get(name), loss, idx);
      EXPECT_LT(res.max_rel, 1e-4) << name;
      checked += res.checked;
    }
    EXPECT_GT(checked, 10u);
    const auto in_res = scae::testing::check_entries(in, grads.input, loss,
                                                     scae::testing::pick_entries(in.size(), 30, x));
    EXPECT_LT(in_res.max_rel, 1e-4);
  }
}

TEST(Network, ClassifierFiniteDifferences) {
  const NetworkSpec spec = toy_spec().with_head(HeadKind::classifier, 4);
  for (int seed = 0; seed < 5; ++seed) {
    Rng r(300 + seed);
    auto net = build_classifier<double>(spec, r, nullptr, 0.4);
    Rng x(400 + seed);
    const TensorD in = gaussian<double>(x, Shape{4, 2, 7, 7}, 0.0, 1.0);
    const std::vector<int> labels{0, 1, 2, 3};
    auto p = net.params;
    const auto fwd = forward(net.graph, p, in, BnMode::train);
    const auto lg = softmax_cross_entropy(fwd.output(), labels);
    const auto grads = backward(net.graph, net.params, fwd, lg.grad);
    const auto loss = [&] {
      auto q = net.params;
      const auto f = forward(net.graph, q, in, BnMode::train);
      std::uint64_t kinks = 0;
      for (const auto& node : net.graph.nodes())
        if (node.kind == OpKind::relu) kinks = scae::testing::mask_hash(f.at(node.inputs[0]), kinks);
      return Eval{softmax_cross_entropy(f.output(), labels).loss, kinks};
    };
    for (const auto& e : grads.params.entries()) {
      auto& t = net.params.get(e.name);
      if (cancelled_by_bn(e.name)) continue;
      const auto res = scae::testing::check_entries(t, e.value, loss, scae::testing::pick_entries(t.size(), 4, x));
      EXPECT_LT(res.max_rel, 1e-4) << e.name;
    }
  }
}

TEST(Network, FrozenEncoderGetsZeroGradients) {
  const NetworkSpec spec = toy_spec();
  Rng r(8);
  auto net = build_autoencoder<float>(spec, r, {0.3, false});
  const FreezeSet frozen = encoder_freeze_set(spec);
  EXPECT_TRUE(frozen.contains("enc1.conv.weight"));
  EXPECT_TRUE(frozen.contains("enc3.bn.gamma"));
  EXPECT_FALSE(frozen.contains("dec1.deconv.weight"));
  Rng x(9);
  const Tensor in = gaussian<float>(x, Shape{2, 2, 7, 7}, 0.0, 1.0);
  const auto before = net.params;
  const auto fwd = forward(net.graph, net.params, in, BnMode::train, frozen);
  // BN layers with frozen affine terms run on their running statistics.
  for (const auto& name : {"enc1.bn.running_mean", "enc2.bn.running_var"})
    EXPECT_TRUE(bitwise_equal(net.params.get(name), before.get(name)));
  BackwardOptions bo;
  bo.frozen = frozen;
  const auto g = backward(net.graph, net.params, fwd, gaussian<float>(x, in.shape(), 0.0, 1.0), bo);
  for (const auto& e : g.params.entries()) {
    const bool enc = frozen.contains(e.name);
    double mag = 0.0;
    for (float v : e.value.values()) mag += std::abs(v);
    if (enc) EXPECT_EQ(mag, 0.0) << e.name;
    else EXPECT_GT(mag, 0.0) << e.name;
  }
}

TEST(Network, ClassifierFromAutoencoder) {
  const NetworkSpec spec = toy_spec();
  Rng r(10);
  const auto ae = build_autoencoder<float>(spec, r);
  Rng c1(11), c2(11);
  const auto fresh = build_classifier<float>(spec.with_head(HeadKind::classifier, 10), c1);
  const auto init = build_classifier<float>(spec.with_head(HeadKind::classifier, 10), c2, &ae.params);
  for (const auto& e : init.params.entries()) {
    if (e.name.starts_with("enc")) {
      EXPECT_TRUE(bitwise_equal(e.value, ae.params.get(e.name))) << e.name;
    } else {
      EXPECT_TRUE(bitwise_equal(e.value, fresh.params.get(e.name))) << e.name;
    }
  }
  EXPECT_TRUE(init.params.contains("head.fc.weight"));

  NetworkSpec wider = spec;
  wider.stages[0].width = 5;
  Rng r2(12);
  const auto other = build_autoencoder<float>(wider, r2);
  Rng c3(13);
  EXPECT_THROW(build_classifier<float>(spec.with_head(HeadKind::classifier, 10), c3, &other.params), FormatError);
}

TEST(Network, Network1ClassifierLogits) {
  Rng r(14);
  auto net = build_classifier<float>(network1_cifar(16).with_head(HeadKind::classifier, 10), r);
  Rng x(15);
  const Tensor in = gaussian<float>(x, Shape{3, 3, 29, 29}, 0.0, 1.0);
  EXPECT_EQ(forward(net.graph, net.params, in, BnMode::infer).output().shape(), Shape({3, 10}));
}

TEST(Network, ActivationNamesStable) {
  const Graph a = build_graph(network1_cifar());
  const Graph b = build_graph(network1_cifar());
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  for (std::size_t i = 0; i < a.nodes().size(); ++i) EXPECT_EQ(a.nodes()[i].name, b.nodes()[i].name);
  EXPECT_EQ(a.relu_names().front(), "enc1.relu");
  EXPECT_THROW(a.shape_of("enc99.relu"), ContractError);
}

TEST(Network, ExtractEncoder) {
  Rng r(16);
  const auto ae = build_autoencoder<float>(toy_spec(), r);
  const auto enc = extract_encoder(toy_spec(), ae.params);
  EXPECT_EQ(enc.graph.output_name(), "enc3.relu");
  EXPECT_EQ(enc.params.size(), encoder_parameter_names(toy_spec()).size());
}

TEST(ProbeHeads, ReconstructorShapesAndSize) {
  const Shape target{3, 29, 29};
  const Graph g = build_probe_reconstructor(Shape{16, 15, 15}, target, 1, 2, 8);
  EXPECT_EQ(g.shape_of(g.output_name()), target);
  Rng r(1);
  EXPECT_EQ(g.init_parameters<float>(r, 0.01).element_count(), probe_reconstructor_size(16, 3, 2, 8));
  EXPECT_EQ(probe_reconstructor_size(16, 3, 2, 8), (16 * 8 * 9 + 8) + (8 * 3 * 9 + 3));
  EXPECT_THROW(build_probe_reconstructor(Shape{16, 15, 15}, target, 0, 2, 8), ContractError);

  const Graph c = build_probe_classifier(Shape{4, 5, 5}, 10);
  EXPECT_EQ(c.shape_of(c.output_name()), Shape({10}));
}
