#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "minconv/approx.hpp"
#include "minconv/nn.hpp"
#include "minconv/rng.hpp"
#include "minconv/tensor.hpp"

namespace minconv::nn {

/// A trainable tensor and the gradient accumulated for it by backward().
template <typename T>
struct Param {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  /// Caches whatever backward() needs.
  virtual Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng& rng) = 0;
  /// Gradient w.r.t. the last forward input; writes parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>> params() { return {}; }
  virtual const LayerSpec& spec() const = 0;
  /// Layers that can skip computing the input gradient override this.
  virtual void set_input_grad(bool) {}
};

template <typename T>
class ConvLayer final : public Layer<T> {
 public:
  ConvLayer(const LayerSpec& spec, std::size_t in_channels, Rng& init_rng);

  Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  const LayerSpec& spec() const override { return spec_; }

  ApproxConvLayer<T>& core() { return core_; }
  const ApproxConvLayer<T>& core() const { return core_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& bias() const { return bias_; }
  void set_mode(ConvMode mode);
  /// With false, backward() returns an empty tensor instead of d(loss)/d(x).
  void set_input_grad(bool on) override { input_grad_ = on; }

 private:
  LayerSpec spec_;
  ApproxConvLayer<T> core_;
  bool input_grad_ = true;
  Tensor<T> bias_;
  Tensor<T> grad_w_;
  Tensor<T> grad_b_;
  ConvForwardCache<T> cache_;
};

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major order.
template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  explicit MaxPoolLayer(const LayerSpec& spec) : spec_(spec) {}
  Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  const LayerSpec& spec() const override { return spec_; }

 private:
  LayerSpec spec_;
  Extents in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Leaky ReLU; a slope of 0 gives the plain ReLU.
template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  explicit ReluLayer(const LayerSpec& spec) : spec_(spec) {}
  Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  const LayerSpec& spec() const override { return spec_; }

 private:
  LayerSpec spec_;
  Tensor<T> input_;
};

template <typename T>
class FullyConnectedLayer final : public Layer<T> {
 public:
  FullyConnectedLayer(const LayerSpec& spec, std::size_t in_dim, Rng& init_rng);
  Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>> params() override;
  const LayerSpec& spec() const override { return spec_; }

  Tensor<T>& weights() { return weights_; }
  Tensor<T>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  Tensor<T> weights_;  // [out, in]
  Tensor<T> bias_;
  Tensor<T> grad_w_;
  Tensor<T> grad_b_;
  Tensor<T> input_;    // flattened [N, in]
  Extents in_shape_;
};

/// Inverted dropout: scales kept units by 1/(1-rate) in training, identity at
/// inference.
template <typename T>
class DropoutLayer final : public Layer<T> {
 public:
  explicit DropoutLayer(const LayerSpec& spec) : spec_(spec) {}
  Tensor<T> forward(const Tensor<T>& x, Phase phase, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  const LayerSpec& spec() const override { return spec_; }

 private:
  LayerSpec spec_;
  std::vector<T> mask_;
};

/// A feed-forward stack built from a NetworkSpec.
template <typename T>
class Network {
 public:
  /// Weights are drawn from zero-mean uniform distributions with limit
  /// sqrt(6 / fan_in); biases start at zero.
  Network(NetworkSpec spec, std::uint64_t seed);

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// x: [N, C, H, W] -> logits [N, 10]. With `trace`, records the input of every
  /// layer.
  Tensor<T> forward(const Tensor<T>& x, Phase phase, std::vector<Tensor<T>>* trace = nullptr);
  /// Back-propagates d(loss)/d(logits); returns d(loss)/d(input), or an empty
  /// tensor after set_input_grad(false).
  Tensor<T> backward(const Tensor<T>& grad_logits);
  /// Training never needs the gradient with respect to the images.
  void set_input_grad(bool on) { layers_.front()->set_input_grad(on); }

  std::vector<Param<T>> params();
  std::vector<ConvLayer<T>*> conv_layers();
  std::vector<const ConvLayer<T>*> conv_layers() const;
  const NetworkSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  /// Switches every conv between exact and min_approx; weights and statistics
  /// are untouched.
  void set_conv_modes(const std::vector<ConvMode>& modes);
  /// Reseeds the dropout stream.
  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  Rng dropout_rng_;
};

template <typename T>
struct LossResult {
  double loss = 0.0;       // mean over the batch
  Tensor<T> grad_logits;   // d(mean loss)/d(logits)
};

/// Softmax cross-entropy averaged over the batch.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

/// Index of the largest logit per row (first wins on ties).
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace minconv::nn
