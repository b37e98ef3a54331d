#include <doctest.h>

#include <cmath>
#include <random>

#include "minconv/network.hpp"
#include "minconv/nn.hpp"

using namespace minconv;
using namespace minconv::nn;

namespace {

NetworkSpec tiny_spec(ConvMode mode, bool with_dropout = false) {
  NetworkSpec s;
  s.name = "tiny";
  s.input = {2, 6, 6};
  s.layers = {LayerSpec::conv(3, 3, 3, mode), LayerSpec::leaky_relu(0.1), LayerSpec::maxpool(),
              LayerSpec::fully_connected(5), LayerSpec::relu()};
  if (with_dropout) s.layers.push_back(LayerSpec::dropout(0.5));
  s.layers.push_back(LayerSpec::fully_connected(kNumClasses));
  return s;
}

template <typename T>
Tensor<T> random_input(Extents shape, std::uint64_t seed) {
  Rng r(seed);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(r.normal(0, 1));
  return t;
}

}  // namespace

TEST_CASE("LeNet and mini-cifar shapes") {
  const auto lenet = build_lenet({ConvMode::exact, ConvMode::min_approx});
  const auto shapes = propagate_shapes(lenet);
  CHECK(shapes[0] == Extents{32, 28, 28});
  CHECK(shapes[2] == Extents{32, 14, 14});
  CHECK(shapes[3] == Extents{64, 14, 14});
  CHECK(shapes[5] == Extents{1024});
  CHECK(shapes.back() == Extents{10});
  CHECK(lenet.conv_count() == 2);
  CHECK(lenet.conv_modes() == std::vector<ConvMode>{ConvMode::exact, ConvMode::min_approx});

  const auto mc = build_mini_cifar(std::vector<ConvMode>(6, ConvMode::min_approx));
  const auto ms = propagate_shapes(mc);
  CHECK(mc.conv_count() == 6);
  CHECK(ms.back() == Extents{10});
  CHECK(conv_count_of("mini-cifar") == 6);
  CHECK_THROWS_AS(build_lenet({ConvMode::exact}), UsageError);
  CHECK_THROWS_AS(build_network("vgg", {}, {1, 28, 28}), UsageError);
}

TEST_CASE("shape propagation rejects misfit stacks") {
  NetworkSpec s = tiny_spec(ConvMode::exact);
  s.layers.back() = LayerSpec::fully_connected(7);
  CHECK_THROWS_AS(propagate_shapes(s), DimensionError);
  NetworkSpec t = tiny_spec(ConvMode::exact);
  t.layers.insert(t.layers.begin() + 4, LayerSpec::conv(2, 3, 3, ConvMode::exact));
  CHECK_THROWS_AS(propagate_shapes(t), DimensionError);
  CHECK_THROWS_AS(LayerSpec::conv(2, 4, 4, ConvMode::exact).conv_shape(), DimensionError);
  CHECK_THROWS_AS(LayerSpec::dropout(1.0), UsageError);
}

TEST_CASE("mode lists") {
  CHECK(parse_mode_list("all-approx", 3) == std::vector<ConvMode>(3, ConvMode::min_approx));
  CHECK(parse_mode_list("exact,approx", 2) == std::vector<ConvMode>{ConvMode::exact, ConvMode::min_approx});
  CHECK(format_mode_list({ConvMode::exact, ConvMode::min_approx}) == "exact,approx");
  CHECK_THROWS_AS(parse_mode_list("exact", 2), UsageError);
  CHECK_THROWS_AS(parse_mode_list("exact,fast", 2), UsageError);
}

TEST_CASE("describe and parse round trip; digest ignores conv modes") {
  for (const auto& spec : {build_lenet({ConvMode::exact, ConvMode::min_approx}),
                           build_mini_cifar(std::vector<ConvMode>(6, ConvMode::exact)), tiny_spec(ConvMode::exact)}) {
    CHECK(parse_network_spec(describe(spec)) == spec);
  }
  const auto a = build_lenet({ConvMode::exact, ConvMode::exact});
  const auto b = build_lenet({ConvMode::min_approx, ConvMode::min_approx});
  CHECK(architecture_digest(a) == architecture_digest(b));
  NetworkSpec c = a;
  c.layers[0].out_channels = 16;
  CHECK(architecture_digest(a) != architecture_digest(c));
  CHECK(architecture_digest(a) != architecture_digest(build_mini_cifar(std::vector<ConvMode>(6, ConvMode::exact))));
  CHECK_THROWS_AS(parse_network_spec("name x\nconv 3 3 3 exact\n"), FormatError);
  CHECK_THROWS_AS(parse_network_spec("input 1 4 4\nwhat 3\n"), FormatError);
}

TEST_CASE("max pooling: values, argmax routing and first-wins ties") {
  MaxPoolLayer<double> pool(LayerSpec::maxpool());
  Rng rng(0);
  const Tensor<double> x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 2, 3, 5, 2, 2});
  const auto y = pool.forward(x, Phase::train, rng);
  CHECK(y == Tensor<double>({1, 1, 1, 2}, std::vector<double>{5, 2}));
  const auto g = pool.backward(Tensor<double>({1, 1, 1, 2}, std::vector<double>{10, 20}));
  CHECK(g == Tensor<double>({1, 1, 2, 4}, std::vector<double>{0, 10, 20, 0, 0, 0, 0, 0}));
}

TEST_CASE("leaky relu forward and backward") {
  ReluLayer<double> leaky(LayerSpec::leaky_relu(0.1));
  Rng rng(0);
  const Tensor<double> x({1, 4}, std::vector<double>{-2, -0.5, 0.5, 3});
  const auto y = leaky.forward(x, Phase::train, rng);
  CHECK(y[0] == doctest::Approx(-0.2));
  CHECK(y[3] == 3.0);
  const auto g = leaky.backward(Tensor<double>({1, 4}, 1.0));
  CHECK(g == Tensor<double>({1, 4}, std::vector<double>{0.1, 0.1, 1, 1}));
  ReluLayer<double> relu(LayerSpec::relu());
  CHECK(relu.forward(x, Phase::train, rng) == Tensor<double>({1, 4}, std::vector<double>{0, 0, 0.5, 3}));
}

TEST_CASE("dropout scales kept units in training and is identity at inference") {
  DropoutLayer<double> drop(LayerSpec::dropout(0.5));
  Rng rng(4);
  const Tensor<double> x({1, 10000}, 1.0);
  const auto y = drop.forward(x, Phase::train, rng);
  std::size_t kept = 0;
  for (double v : y.values()) {
    REQUIRE((v == 0.0 || v == 2.0));
    kept += v != 0.0;
  }
  CHECK(kept > 4800);
  CHECK(kept < 5200);
  const auto g = drop.backward(Tensor<double>({1, 10000}, 1.0));
  CHECK(g == y);
  CHECK(drop.forward(x, Phase::infer, rng) == x);
}

TEST_CASE("softmax cross-entropy hand values and gradient") {
  const Tensor<double> logits({2, 3}, std::vector<double>{0, 0, 0, 1, 2, 3});
  const auto r = softmax_cross_entropy(logits, {1, 2});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(r.loss == doctest::Approx((std::log(3.0) + std::log(z) - 3.0) / 2.0));
  CHECK(r.grad_logits.at(0, 1) == doctest::Approx((1.0 / 3 - 1) / 2));
  CHECK(r.grad_logits.at(1, 0) == doctest::Approx(std::exp(1.0) / z / 2));
  // Large logits stay finite.
  const auto big = softmax_cross_entropy(Tensor<double>({1, 2}, std::vector<double>{1000, 0}), {1});
  CHECK(big.loss == doctest::Approx(1000.0));
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {1}), DimensionError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {1, 3}), DimensionError);
  CHECK(argmax_rows(Tensor<double>({2, 3}, std::vector<double>{1, 1, 0, 0, 2, 2})) == std::vector<int>{0, 1});
}

TEST_CASE("network gradients match central differences (exact mode, double)") {
  Network<double> net(tiny_spec(ConvMode::exact), 3);
  const auto x = random_input<double>({3, 2, 6, 6}, 5);
  const std::vector<int> y{1, 7, 3};
  auto loss = [&] { return softmax_cross_entropy(net.forward(x, Phase::train), y).loss; };
  const auto r = softmax_cross_entropy(net.forward(x, Phase::train), y);
  const auto gx = net.backward(r.grad_logits);
  REQUIRE(gx.shape() == x.shape());
  const double h = 1e-5;
  double worst = 0.0;
  for (auto& p : net.params()) {
    const Tensor<double> grad = *p.grad;
    for (std::size_t i = 0; i < p.value->size(); i += 3) {
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double lp = loss();
      (*p.value)[i] = keep - h;
      const double lm = loss();
      (*p.value)[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::fabs(fd - grad[i]) / std::max(1e-3, std::fabs(fd) + std::fabs(grad[i])));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("network construction is seed-determined and modes switch in place") {
  Network<float> a(build_lenet({ConvMode::exact, ConvMode::exact}), 9);
  Network<float> b(build_lenet({ConvMode::exact, ConvMode::exact}), 9);
  Network<float> c(build_lenet({ConvMode::exact, ConvMode::exact}), 10);
  CHECK(*a.params()[0].value == *b.params()[0].value);
  CHECK_FALSE(*a.params()[0].value == *c.params()[0].value);
  CHECK(a.params().size() == 8);
  CHECK(a.params()[0].name == "0.conv.weight");

  const Tensor<float> w0 = *a.params()[0].value;
  a.set_conv_modes({ConvMode::min_approx, ConvMode::exact});
  CHECK(a.spec().conv_modes() == std::vector<ConvMode>{ConvMode::min_approx, ConvMode::exact});
  CHECK(a.conv_layers()[0]->core().mode == ConvMode::min_approx);
  CHECK(*a.params()[0].value == w0);

  const auto x = random_input<float>({2, 1, 28, 28}, 1);
  const auto logits = a.forward(x, Phase::infer);
  CHECK(logits.shape() == Extents{2, 10});
  CHECK_THROWS_AS(a.forward(random_input<float>({2, 1, 27, 28}, 1), Phase::infer), DimensionError);
}

TEST_CASE("the first layer's input gradient can be skipped") {
  Network<double> net(tiny_spec(ConvMode::min_approx), 3);
  const auto x = random_input<double>({2, 2, 6, 6}, 5);
  const auto r = softmax_cross_entropy(net.forward(x, Phase::train), {0, 1});
  net.backward(r.grad_logits);
  const Tensor<double> gw = *net.params()[0].grad;
  net.set_input_grad(false);
  const auto r2 = softmax_cross_entropy(net.forward(x, Phase::train), {0, 1});
  CHECK(net.backward(r2.grad_logits).empty());
  CHECK(*net.params()[0].grad == gw);
}

TEST_CASE("dropout stream is reproducible after reseeding") {
  Network<double> net(tiny_spec(ConvMode::exact, true), 1);
  const auto x = random_input<double>({2, 2, 6, 6}, 2);
  net.reseed_dropout(77);
  const auto a = net.forward(x, Phase::train);
  net.reseed_dropout(77);
  CHECK(net.forward(x, Phase::train) == a);
  CHECK(net.forward(x, Phase::infer) == net.forward(x, Phase::infer));
}
